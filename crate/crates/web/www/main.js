import init, {
  gaussian_map_rgba,
  augment_scene,
  scale_balance,
  published_policy,
} from "./pkg/scaleaug_web.js";

const $ = (id) => document.getElementById(id);

function paint(canvas, width, height, rgba) {
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), width, height), 0, 0);
  return ctx;
}

function outline(ctx, boxes, color, dashed) {
  ctx.save();
  ctx.strokeStyle = color;
  ctx.lineWidth = 1;
  ctx.setLineDash(dashed ? [4, 3] : []);
  for (const [x, y, w, h] of boxes) ctx.strokeRect(x + 0.5, y + 0.5, w - 1, h - 1);
  ctx.restore();
}

function showError(el, err) {
  el.classList.add("error");
  el.textContent = String(err);
}

function renderGauss() {
  const v = (id) => Number($(id).value);
  for (const out of document.querySelectorAll("#gauss-controls output")) {
    out.value = $(out.htmlFor.value).value;
  }
  const [xc, yc, h, w] = [v("g-xc"), v("g-yc"), v("g-h"), v("g-w")];
  const info = $("gauss-info");
  try {
    const r = gaussian_map_rgba(xc, yc, h, w, 240, 320, v("g-r"));
    const ctx = paint($("gauss-canvas"), r.width, r.height, r.rgba);
    outline(ctx, [[xc - w / 2, yc - h / 2, w, h]], "#fff", true);
    const d = JSON.parse(r.info);
    info.classList.remove("error");
    info.textContent =
      `sigma_h       ${d.sigma_h.toFixed(3)}\n` +
      `sigma_w       ${d.sigma_w.toFixed(3)}\n` +
      `map volume    ${d.numeric_area.toFixed(1)}\n` +
      `r * h * w     ${d.target_area.toFixed(1)}\n` +
      `ratio         ${(d.numeric_area / d.target_area).toFixed(4)}`;
    r.free();
  } catch (e) {
    showError(info, e);
  }
}

function describeOp(op) {
  return op.value === null ? op.kind : `${op.kind}(${op.value.toFixed(2)})`;
}

function renderScene() {
  const info = $("s-info");
  try {
    const r = augment_scene(Number($("s-seed").value) >>> 0, $("s-policy").value, $("s-inverted").checked);
    const d = JSON.parse(r.info);
    outline(paint($("s-before"), r.width, r.height, r.before), d.boxes_before, "#ff0", false);
    outline(paint($("s-after"), r.width, r.height, r.after), d.boxes_after, "#ff0", false);
    r.free();
    $("s-caption").textContent = `augmented: ${d.zoom.branch} (ratio ${d.zoom.ratio.toFixed(2)})`;
    const lines = d.audit.map((a) => {
      const ops = a.applied.length ? a.applied.map(describeOp).join(" + ") : "nothing fired";
      const s = a.sigmas ? `sigma ${a.sigmas.sigma_h.toFixed(1)} x ${a.sigmas.sigma_w.toFixed(1)}` : "skipped";
      return `box ${a.box_index}  ${a.scale.padEnd(6)}  r=${a.area_ratio}  sub-policy ${a.sub_policy + 1}  ${s}  ${ops}`;
    });
    info.classList.remove("error");
    info.textContent = lines.join("\n");
  } catch (e) {
    showError(info, e);
  }
}

function renderMetric() {
  const out = $("m-out");
  try {
    out.textContent = scale_balance($("m-stats").value, Number($("m-eps").value));
    out.classList.remove("error");
  } catch (e) {
    showError(out, e);
  }
}

await init();
$("s-policy").value = published_policy();
for (const id of ["g-xc", "g-yc", "g-h", "g-w", "g-r"]) $(id).addEventListener("input", renderGauss);
$("s-run").addEventListener("click", renderScene);
$("s-inverted").addEventListener("change", renderScene);
$("s-next").addEventListener("click", () => {
  $("s-seed").value = Number($("s-seed").value) + 1;
  renderScene();
});
$("m-stats").addEventListener("input", renderMetric);
$("m-eps").addEventListener("input", renderMetric);
renderGauss();
renderScene();
renderMetric();
