//! Policy domain types, the discrete search space, and the genome encoding.
//!
//! A [`Policy`] carries two image-level zoom operations, five box-level
//! sub-policies (one color op and one geometric op each) and three per-scale
//! area ratios. Every searchable parameter lives on a small discrete grid, so
//! a policy maps losslessly onto a fixed-length [`Genome`] of grid indices.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Number of box-level sub-policies in a policy.
pub const NUM_SUB_POLICIES: usize = 5;

/// Number of genes in a [`Genome`]: 4 zoom genes, 6 per sub-policy, 3 area ratios.
pub const GENOME_LEN: usize = 4 + 6 * NUM_SUB_POLICIES + 3;

/// Searchable area ratios, shared by all three scales.
pub const AREA_RATIO_GRID: [f64; 10] = [0.2, 0.4, 0.6, 0.8, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0];

/// Largest zoom probability, in tenths.
const MAX_ZOOM_TENTHS: u8 = 5;
/// Largest op probability, in tenths.
const MAX_OP_TENTHS: u8 = 10;
/// Largest discrete magnitude.
pub const MAX_MAGNITUDE: u8 = 10;

#[derive(Clone, Debug, PartialEq)]
pub enum PolicyError {
    /// A value is not on the grid of the field it was supplied for.
    OffGrid { field: String, value: String },
    /// A color op was placed in a geometric slot or vice versa.
    WrongCategory { field: String, op: OpKind },
    /// Gene out of its index range.
    GeneOutOfRange { position: usize, value: u8, max: u8 },
    /// Genome has the wrong number of genes.
    GenomeLength { expected: usize, got: usize },
    /// Structural problem in a policy document.
    Document { path: String, message: String },
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OffGrid { field, value } => write!(f, "{field}: value {value} is not on the grid"),
            Self::WrongCategory { field, op } => {
                write!(f, "{field}: `{op}` is a {} operation", op.category())
            }
            Self::GeneOutOfRange { position, value, max } => {
                write!(f, "gene {position}: index {value} outside 0..={max}")
            }
            Self::GenomeLength { expected, got } => {
                write!(f, "genome has {got} genes, expected {expected}")
            }
            Self::Document { path, message } => {
                if path.is_empty() || path == "." {
                    write!(f, "policy document: {message}")
                } else {
                    write!(f, "policy document at `{path}`: {message}")
                }
            }
        }
    }
}

impl std::error::Error for PolicyError {}

/// Whether an op transforms pixel values or pixel positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpCategory {
    Color,
    Geometric,
}

impl fmt::Display for OpCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Color => "color",
            Self::Geometric => "geometric",
        })
    }
}

/// Box-level operation catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    Brightness,
    Color,
    Contrast,
    Cutout,
    Equalize,
    Sharpness,
    Solarize,
    SolarizeAdd,
    Hflip,
    Rotate,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
}

impl OpKind {
    /// Color ops in gene-index order.
    pub const COLOR: [OpKind; 8] = [
        OpKind::Brightness,
        OpKind::Color,
        OpKind::Contrast,
        OpKind::Cutout,
        OpKind::Equalize,
        OpKind::Sharpness,
        OpKind::Solarize,
        OpKind::SolarizeAdd,
    ];

    /// Geometric ops in gene-index order.
    pub const GEOMETRIC: [OpKind; 6] = [
        OpKind::Hflip,
        OpKind::Rotate,
        OpKind::ShearX,
        OpKind::ShearY,
        OpKind::TranslateX,
        OpKind::TranslateY,
    ];

    pub fn category(self) -> OpCategory {
        match self {
            OpKind::Hflip
            | OpKind::Rotate
            | OpKind::ShearX
            | OpKind::ShearY
            | OpKind::TranslateX
            | OpKind::TranslateY => OpCategory::Geometric,
            _ => OpCategory::Color,
        }
    }

    /// Ops whose magnitude is stored but never read.
    pub fn is_magnitude_free(self) -> bool {
        matches!(self, OpKind::Equalize | OpKind::Hflip)
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Brightness => "Brightness",
            OpKind::Color => "Color",
            OpKind::Contrast => "Contrast",
            OpKind::Cutout => "Cutout",
            OpKind::Equalize => "Equalize",
            OpKind::Sharpness => "Sharpness",
            OpKind::Solarize => "Solarize",
            OpKind::SolarizeAdd => "SolarizeAdd",
            OpKind::Hflip => "Hflip",
            OpKind::Rotate => "Rotate",
            OpKind::ShearX => "ShearX",
            OpKind::ShearY => "ShearY",
            OpKind::TranslateX => "TranslateX",
            OpKind::TranslateY => "TranslateY",
        }
    }

    /// Position of this op inside its category list (the gene value).
    pub fn index_in_category(self) -> usize {
        let list: &[OpKind] = match self.category() {
            OpCategory::Color => &Self::COLOR,
            OpCategory::Geometric => &Self::GEOMETRIC,
        };
        list.iter().position(|&k| k == self).expect("op listed in its category")
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::COLOR
            .iter()
            .chain(Self::GEOMETRIC.iter())
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// A probability stored as an integer number of tenths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Probability(u8);

impl Probability {
    pub const ZERO: Probability = Probability(0);
    pub const ONE: Probability = Probability(10);

    pub fn from_tenths(tenths: u8) -> Option<Self> {
        (tenths <= 10).then_some(Self(tenths))
    }

    /// Accepts any multiple of 0.1 in [0, 1].
    pub fn from_f64(value: f64) -> Option<Self> {
        let scaled = value * 10.0;
        let rounded = scaled.round();
        if !(0.0..=10.0).contains(&rounded) || (scaled - rounded).abs() > 1e-9 {
            return None;
        }
        Some(Self(rounded as u8))
    }

    pub fn tenths(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 10.0
    }
}

/// Discrete magnitude in 0..=10. Policies only use the even values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Magnitude(u8);

impl Magnitude {
    pub fn new(m: u8) -> Option<Self> {
        (m <= MAX_MAGNITUDE).then_some(Self(m))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    fn on_policy_grid(self) -> bool {
        self.0 % 2 == 0
    }
}

/// Probability and magnitude of one zoom function.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ZoomParams {
    probability: Probability,
    magnitude: Magnitude,
}

impl ZoomParams {
    /// `probability` in tenths (0..=5), `magnitude` even in 0..=10.
    pub fn new(probability_tenths: u8, magnitude: u8) -> Result<Self, PolicyError> {
        if probability_tenths > MAX_ZOOM_TENTHS {
            return Err(PolicyError::OffGrid {
                field: "probability".into(),
                value: format!("{}", f64::from(probability_tenths) / 10.0),
            });
        }
        let magnitude = Magnitude::new(magnitude)
            .filter(|m| m.on_policy_grid())
            .ok_or_else(|| PolicyError::OffGrid {
                field: "magnitude".into(),
                value: magnitude.to_string(),
            })?;
        Ok(Self {
            probability: Probability(probability_tenths),
            magnitude,
        })
    }

    pub fn probability(&self) -> Probability {
        self.probability
    }

    pub fn magnitude(&self) -> Magnitude {
        self.magnitude
    }
}

/// One box-level operation with its application probability and magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoxOpSpec {
    kind: OpKind,
    probability: Probability,
    magnitude: Magnitude,
}

impl BoxOpSpec {
    /// `probability` in tenths (0..=10), `magnitude` even in 0..=10.
    pub fn new(kind: OpKind, probability_tenths: u8, magnitude: u8) -> Result<Self, PolicyError> {
        let probability = Probability::from_tenths(probability_tenths).ok_or_else(|| {
            PolicyError::OffGrid {
                field: "probability".into(),
                value: format!("{}", f64::from(probability_tenths) / 10.0),
            }
        })?;
        let magnitude = Magnitude::new(magnitude)
            .filter(|m| m.on_policy_grid())
            .ok_or_else(|| PolicyError::OffGrid {
                field: "magnitude".into(),
                value: magnitude.to_string(),
            })?;
        Ok(Self {
            kind,
            probability,
            magnitude,
        })
    }

    /// The no-op color slot ("Original"): Brightness that never fires.
    pub fn original() -> Self {
        Self {
            kind: OpKind::Brightness,
            probability: Probability::ZERO,
            magnitude: Magnitude(0),
        }
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn probability(&self) -> Probability {
        self.probability
    }

    pub fn magnitude(&self) -> Magnitude {
        self.magnitude
    }
}

/// A color op paired with a geometric op.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SubPolicy {
    color: BoxOpSpec,
    geometric: BoxOpSpec,
}

impl SubPolicy {
    pub fn new(color: BoxOpSpec, geometric: BoxOpSpec) -> Result<Self, PolicyError> {
        if color.kind.category() != OpCategory::Color {
            return Err(PolicyError::WrongCategory {
                field: "color.op".into(),
                op: color.kind,
            });
        }
        if geometric.kind.category() != OpCategory::Geometric {
            return Err(PolicyError::WrongCategory {
                field: "geometric.op".into(),
                op: geometric.kind,
            });
        }
        Ok(Self { color, geometric })
    }

    pub fn color(&self) -> &BoxOpSpec {
        &self.color
    }

    pub fn geometric(&self) -> &BoxOpSpec {
        &self.geometric
    }

    /// Both ops in application order.
    pub fn ops(&self) -> [&BoxOpSpec; 2] {
        [&self.color, &self.geometric]
    }
}

/// Object scale bucket, by box area with the 32² / 96² thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleCategory {
    Small,
    Middle,
    Large,
}

impl ScaleCategory {
    pub const ALL: [ScaleCategory; 3] = [Self::Small, Self::Middle, Self::Large];

    pub fn from_area(area: f64) -> Self {
        if area < 32.0 * 32.0 {
            Self::Small
        } else if area < 96.0 * 96.0 {
            Self::Middle
        } else {
            Self::Large
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Small => "small",
            Self::Middle => "middle",
            Self::Large => "large",
        }
    }
}

impl fmt::Display for ScaleCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Index into [`AREA_RATIO_GRID`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AreaRatio(u8);

impl AreaRatio {
    pub fn from_index(index: u8) -> Option<Self> {
        (usize::from(index) < AREA_RATIO_GRID.len()).then_some(Self(index))
    }

    pub fn from_value(value: f64) -> Option<Self> {
        AREA_RATIO_GRID
            .iter()
            .position(|&g| (g - value).abs() <= 1e-9 * g.max(1.0))
            .map(|i| Self(i as u8))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        AREA_RATIO_GRID[usize::from(self.0)]
    }
}

/// Per-scale area ratios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AreaRatios {
    pub small: AreaRatio,
    pub middle: AreaRatio,
    pub large: AreaRatio,
}

impl AreaRatios {
    pub fn for_scale(&self, scale: ScaleCategory) -> AreaRatio {
        match scale {
            ScaleCategory::Small => self.small,
            ScaleCategory::Middle => self.middle,
            ScaleCategory::Large => self.large,
        }
    }
}

/// A full augmentation policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Policy {
    pub zoom_in: ZoomParams,
    pub zoom_out: ZoomParams,
    pub sub_policies: [SubPolicy; NUM_SUB_POLICIES],
    pub area_ratios: AreaRatios,
}

impl Policy {
    /// Policy that never changes anything: every probability is zero.
    pub fn identity() -> Self {
        decode_genome(&Genome::zeros()).expect("all-zero genome is valid")
    }

    /// The policy reported as the search result for COCO (RetinaNet, ResNet-50).
    pub fn published() -> Self {
        let op = |kind, p, m| BoxOpSpec::new(kind, p, m).expect("published values are valid");
        let sub = |c, g| SubPolicy::new(c, g).expect("published categories are valid");
        Policy {
            zoom_in: ZoomParams::new(2, 4).expect("valid"),
            zoom_out: ZoomParams::new(4, 10).expect("valid"),
            sub_policies: [
                sub(op(OpKind::Color, 4, 2), op(OpKind::TranslateX, 4, 4)),
                sub(op(OpKind::Brightness, 2, 4), op(OpKind::Rotate, 4, 2)),
                sub(op(OpKind::Sharpness, 4, 2), op(OpKind::ShearX, 2, 6)),
                sub(op(OpKind::SolarizeAdd, 2, 2), op(OpKind::Hflip, 3, 0)),
                sub(BoxOpSpec::original(), op(OpKind::TranslateY, 2, 8)),
            ],
            area_ratios: AreaRatios {
                small: AreaRatio::from_value(6.0).expect("on grid"),
                middle: AreaRatio::from_value(2.0).expect("on grid"),
                large: AreaRatio::from_value(0.4).expect("on grid"),
            },
        }
    }

    /// Probability of keeping the original scale, `1 - P_in - P_out`, in tenths.
    pub fn original_scale_tenths(&self) -> u8 {
        10 - self.zoom_in.probability.0 - self.zoom_out.probability.0
    }
}

/// What values a gene position may take.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneKind {
    ZoomProbability,
    ZoomMagnitude,
    ColorOp,
    GeometricOp,
    OpProbability,
    OpMagnitude,
    AreaRatio,
}

impl GeneKind {
    /// Largest encodable index.
    pub fn max_index(self) -> u8 {
        match self {
            GeneKind::ZoomProbability => MAX_ZOOM_TENTHS,
            GeneKind::ZoomMagnitude | GeneKind::OpMagnitude => MAX_MAGNITUDE / 2,
            GeneKind::ColorOp => OpKind::COLOR.len() as u8 - 1,
            GeneKind::GeometricOp => OpKind::GEOMETRIC.len() as u8 - 1,
            GeneKind::OpProbability => MAX_OP_TENTHS,
            GeneKind::AreaRatio => AREA_RATIO_GRID.len() as u8 - 1,
        }
    }

    /// Number of values the search draws from.
    ///
    /// Op probabilities are encoded in tenths so off-grid published values
    /// (e.g. 0.3) survive encoding, but the search only visits even tenths.
    pub fn search_cardinality(self) -> u8 {
        match self {
            GeneKind::OpProbability => 6,
            other => other.max_index() + 1,
        }
    }

    /// Draws a gene value uniformly from the searched values.
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> u8 {
        let k = rng.gen_range(0..self.search_cardinality());
        match self {
            GeneKind::OpProbability => 2 * k,
            _ => k,
        }
    }

    pub fn at(position: usize) -> Option<GeneKind> {
        const SUB: [GeneKind; 6] = [
            GeneKind::ColorOp,
            GeneKind::OpProbability,
            GeneKind::OpMagnitude,
            GeneKind::GeometricOp,
            GeneKind::OpProbability,
            GeneKind::OpMagnitude,
        ];
        match position {
            0 | 2 => Some(GeneKind::ZoomProbability),
            1 | 3 => Some(GeneKind::ZoomMagnitude),
            p if p < 4 + 6 * NUM_SUB_POLICIES => Some(SUB[(p - 4) % 6]),
            p if p < GENOME_LEN => Some(GeneKind::AreaRatio),
            _ => None,
        }
    }
}

/// Fixed-length vector of grid indices encoding a [`Policy`].
///
/// Layout: `[P_in, M_in, P_out, M_out]`, then per sub-policy
/// `[color op, color p, color m, geometric op, geometric p, geometric m]`,
/// then `[small, middle, large]` area-ratio indices. Probabilities are in
/// tenths, magnitudes are `m / 2`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct Genome([u8; GENOME_LEN]);

impl Genome {
    pub fn zeros() -> Self {
        Genome([0; GENOME_LEN])
    }

    pub fn new(genes: [u8; GENOME_LEN]) -> Result<Self, PolicyError> {
        for (position, &value) in genes.iter().enumerate() {
            let max = GeneKind::at(position).expect("position < GENOME_LEN").max_index();
            if value > max {
                return Err(PolicyError::GeneOutOfRange {
                    position,
                    value,
                    max,
                });
            }
        }
        Ok(Genome(genes))
    }

    /// Uniform draw from the search space.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut genes = [0u8; GENOME_LEN];
        for (position, gene) in genes.iter_mut().enumerate() {
            *gene = GeneKind::at(position).expect("in range").sample(rng);
        }
        Genome(genes)
    }

    pub fn genes(&self) -> &[u8; GENOME_LEN] {
        &self.0
    }

    pub fn hamming(&self, other: &Genome) -> usize {
        self.0.iter().zip(other.0.iter()).filter(|(a, b)| a != b).count()
    }

    /// Returns a copy with one gene replaced, validating the new value.
    pub fn with_gene(&self, position: usize, value: u8) -> Result<Genome, PolicyError> {
        if position >= GENOME_LEN {
            return Err(PolicyError::GenomeLength {
                expected: GENOME_LEN,
                got: position + 1,
            });
        }
        let mut genes = self.0;
        genes[position] = value;
        Genome::new(genes)
    }
}

impl TryFrom<Vec<u8>> for Genome {
    type Error = PolicyError;

    fn try_from(genes: Vec<u8>) -> Result<Self, Self::Error> {
        let got = genes.len();
        let arr: [u8; GENOME_LEN] = genes.try_into().map_err(|_| PolicyError::GenomeLength {
            expected: GENOME_LEN,
            got,
        })?;
        Genome::new(arr)
    }
}

impl From<Genome> for Vec<u8> {
    fn from(g: Genome) -> Self {
        g.0.to_vec()
    }
}

/// Maps every policy field to its grid index.
pub fn encode_policy(policy: &Policy) -> Result<Genome, PolicyError> {
    let mut genes = [0u8; GENOME_LEN];
    let zoom = |z: &ZoomParams| [z.probability.0, z.magnitude.0 / 2];
    genes[0..2].copy_from_slice(&zoom(&policy.zoom_in));
    genes[2..4].copy_from_slice(&zoom(&policy.zoom_out));
    for (i, sub) in policy.sub_policies.iter().enumerate() {
        let base = 4 + 6 * i;
        for (slot, (spec, category)) in [
            (&sub.color, OpCategory::Color),
            (&sub.geometric, OpCategory::Geometric),
        ]
        .into_iter()
        .enumerate()
        {
            if spec.kind.category() != category {
                return Err(PolicyError::WrongCategory {
                    field: format!("sub_policies[{i}].{category}.op"),
                    op: spec.kind,
                });
            }
            if !spec.magnitude.on_policy_grid() {
                return Err(PolicyError::OffGrid {
                    field: format!("sub_policies[{i}].{category}.magnitude"),
                    value: spec.magnitude.0.to_string(),
                });
            }
            let at = base + 3 * slot;
            genes[at] = spec.kind.index_in_category() as u8;
            genes[at + 1] = spec.probability.0;
            genes[at + 2] = spec.magnitude.0 / 2;
        }
    }
    let tail = 4 + 6 * NUM_SUB_POLICIES;
    genes[tail] = policy.area_ratios.small.0;
    genes[tail + 1] = policy.area_ratios.middle.0;
    genes[tail + 2] = policy.area_ratios.large.0;
    Genome::new(genes)
}

/// Inverse of [`encode_policy`].
pub fn decode_genome(genome: &Genome) -> Result<Policy, PolicyError> {
    // Re-validate: a Genome built through serde or `new` is always in range,
    // but this keeps decode total over raw arrays too.
    let g = Genome::new(genome.0)?.0;
    let zoom = |p: u8, m: u8| ZoomParams::new(p, 2 * m);
    let mut subs = Vec::with_capacity(NUM_SUB_POLICIES);
    for i in 0..NUM_SUB_POLICIES {
        let b = 4 + 6 * i;
        let color = BoxOpSpec::new(OpKind::COLOR[usize::from(g[b])], g[b + 1], 2 * g[b + 2])?;
        let geometric =
            BoxOpSpec::new(OpKind::GEOMETRIC[usize::from(g[b + 3])], g[b + 4], 2 * g[b + 5])?;
        subs.push(SubPolicy::new(color, geometric)?);
    }
    let tail = 4 + 6 * NUM_SUB_POLICIES;
    Ok(Policy {
        zoom_in: zoom(g[0], g[1])?,
        zoom_out: zoom(g[2], g[3])?,
        sub_policies: subs.try_into().expect("exactly five sub-policies"),
        area_ratios: AreaRatios {
            small: AreaRatio(g[tail]),
            middle: AreaRatio(g[tail + 1]),
            large: AreaRatio(g[tail + 2]),
        },
    })
}

/// Factors of the search-space size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cardinality {
    /// `(6²)²`: probability and magnitude of both zoom functions.
    pub image_level: u128,
    /// `(6·6²)·(8·6²)`: one sub-policy.
    pub per_sub_policy: u128,
    /// `10³`: the three area ratios.
    pub area_ratios: u128,
    pub total: u128,
}

/// Exact number of distinct policies the search can visit.
pub fn search_space_cardinality() -> Cardinality {
    let card = |k: GeneKind| u128::from(k.search_cardinality());
    let image_level = [0usize, 1, 2, 3]
        .iter()
        .map(|&p| card(GeneKind::at(p).expect("zoom gene")))
        .product::<u128>();
    let per_sub_policy = (4..10)
        .map(|p| card(GeneKind::at(p).expect("sub-policy gene")))
        .product::<u128>();
    let area_ratios = card(GeneKind::AreaRatio).pow(3);
    let total = image_level
        .checked_mul(per_sub_policy.checked_pow(NUM_SUB_POLICIES as u32).expect("fits u128"))
        .and_then(|v| v.checked_mul(area_ratios))
        .expect("search space size fits in u128");
    Cardinality {
        image_level,
        per_sub_policy,
        area_ratios,
        total,
    }
}

// ---------------------------------------------------------------------------
// Document format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZoomDoc {
    probability: f64,
    magnitude: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OpDoc {
    op: String,
    #[serde(default)]
    probability: f64,
    #[serde(default)]
    magnitude: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubPolicyDoc {
    color: OpDoc,
    geometric: OpDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AreaRatiosDoc {
    small: f64,
    middle: f64,
    large: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDoc {
    zoom_in: ZoomDoc,
    zoom_out: ZoomDoc,
    sub_policies: Vec<SubPolicyDoc>,
    area_ratios: AreaRatiosDoc,
}

fn off_grid(path: String, value: impl fmt::Display) -> PolicyError {
    PolicyError::Document {
        path,
        message: format!("value {value} is not on the grid"),
    }
}

fn zoom_from_doc(doc: &ZoomDoc, path: &str) -> Result<ZoomParams, PolicyError> {
    let p = Probability::from_f64(doc.probability)
        .filter(|p| p.0 <= MAX_ZOOM_TENTHS)
        .ok_or_else(|| off_grid(format!("{path}.probability"), doc.probability))?;
    let m = u8::try_from(doc.magnitude)
        .ok()
        .and_then(Magnitude::new)
        .filter(|m| m.on_policy_grid())
        .ok_or_else(|| off_grid(format!("{path}.magnitude"), doc.magnitude))?;
    Ok(ZoomParams {
        probability: p,
        magnitude: m,
    })
}

fn op_from_doc(doc: &OpDoc, path: &str, category: OpCategory) -> Result<BoxOpSpec, PolicyError> {
    if category == OpCategory::Color && doc.op == "Original" {
        return Ok(BoxOpSpec::original());
    }
    let kind: OpKind = doc.op.parse().map_err(|name| PolicyError::Document {
        path: format!("{path}.op"),
        message: format!("unknown operation `{name}`"),
    })?;
    if kind.category() != category {
        return Err(PolicyError::Document {
            path: format!("{path}.op"),
            message: format!("`{kind}` is a {} operation, expected {category}", kind.category()),
        });
    }
    let probability = Probability::from_f64(doc.probability)
        .ok_or_else(|| off_grid(format!("{path}.probability"), doc.probability))?;
    let magnitude = u8::try_from(doc.magnitude)
        .ok()
        .and_then(Magnitude::new)
        .filter(|m| m.on_policy_grid())
        .ok_or_else(|| off_grid(format!("{path}.magnitude"), doc.magnitude))?;
    Ok(BoxOpSpec {
        kind,
        probability,
        magnitude,
    })
}

/// Parses a JSON policy document.
pub fn parse_policy(doc: &str) -> Result<Policy, PolicyError> {
    let de = &mut serde_json::Deserializer::from_str(doc);
    let parsed: PolicyDoc =
        serde_path_to_error::deserialize(de).map_err(|e| PolicyError::Document {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    if parsed.sub_policies.len() != NUM_SUB_POLICIES {
        return Err(PolicyError::Document {
            path: "sub_policies".into(),
            message: format!(
                "expected {NUM_SUB_POLICIES} sub-policies, found {}",
                parsed.sub_policies.len()
            ),
        });
    }
    let mut subs = Vec::with_capacity(NUM_SUB_POLICIES);
    for (i, s) in parsed.sub_policies.iter().enumerate() {
        let base = format!("sub_policies[{i}]");
        subs.push(SubPolicy {
            color: op_from_doc(&s.color, &format!("{base}.color"), OpCategory::Color)?,
            geometric: op_from_doc(&s.geometric, &format!("{base}.geometric"), OpCategory::Geometric)?,
        });
    }
    let ratio = |v: f64, name: &str| {
        AreaRatio::from_value(v).ok_or_else(|| off_grid(format!("area_ratios.{name}"), v))
    };
    Ok(Policy {
        zoom_in: zoom_from_doc(&parsed.zoom_in, "zoom_in")?,
        zoom_out: zoom_from_doc(&parsed.zoom_out, "zoom_out")?,
        sub_policies: subs.try_into().expect("length checked"),
        area_ratios: AreaRatios {
            small: ratio(parsed.area_ratios.small, "small")?,
            middle: ratio(parsed.area_ratios.middle, "middle")?,
            large: ratio(parsed.area_ratios.large, "large")?,
        },
    })
}

/// Renders a policy as a pretty-printed JSON document.
pub fn serialize_policy(policy: &Policy) -> String {
    let zoom = |z: &ZoomParams| ZoomDoc {
        probability: z.probability.value(),
        magnitude: u32::from(z.magnitude.0),
    };
    let op = |s: &BoxOpSpec| OpDoc {
        op: s.kind.name().to_string(),
        probability: s.probability.value(),
        magnitude: u32::from(s.magnitude.0),
    };
    let doc = PolicyDoc {
        zoom_in: zoom(&policy.zoom_in),
        zoom_out: zoom(&policy.zoom_out),
        sub_policies: policy
            .sub_policies
            .iter()
            .map(|s| SubPolicyDoc {
                color: op(&s.color),
                geometric: op(&s.geometric),
            })
            .collect(),
        area_ratios: AreaRatiosDoc {
            small: policy.area_ratios.small.value(),
            middle: policy.area_ratios.middle.value(),
            large: policy.area_ratios.large.value(),
        },
    };
    serde_json::to_string_pretty(&doc).expect("policy document serializes")
}

impl Serialize for Policy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let value: serde_json::Value =
            serde_json::from_str(&serialize_policy(self)).map_err(serde::ser::Error::custom)?;
        value.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        parse_policy(&value.to_string()).map_err(serde::de::Error::custom)
    }
}
