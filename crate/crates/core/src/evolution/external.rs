use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use wait_timeout::ChildExt;

use crate::metric::ScaleStats;
use crate::policy::{serialize_policy, Policy};

use super::{Evaluator, EvaluatorError};

/// Runs a shell command per evaluation.
///
/// The template's `{policy}` placeholder is replaced by the path of a
/// freshly written policy document and `{stats}` by the path where the
/// command must write its stats document. Both paths are single-quoted
/// before substitution.
#[derive(Clone, Debug)]
pub struct ExternalEvaluator {
    template: String,
    workdir: PathBuf,
    timeout: Option<Duration>,
    counter: std::sync::Arc<AtomicU64>,
}

impl ExternalEvaluator {
    pub fn new(
        template: impl Into<String>,
        workdir: impl Into<PathBuf>,
        timeout: Option<Duration>,
    ) -> Result<Self, EvaluatorError> {
        let template = template.into();
        for placeholder in ["{policy}", "{stats}"] {
            if !template.contains(placeholder) {
                return Err(EvaluatorError::Other(format!(
                    "evaluator command template is missing the {placeholder} placeholder"
                )));
            }
        }
        let workdir = workdir.into();
        fs::create_dir_all(&workdir)?;
        Ok(Self {
            template,
            workdir,
            timeout,
            counter: Default::default(),
        })
    }

    pub fn workdir(&self) -> &Path {
        &self.workdir
    }

    fn command_line(&self, policy_path: &Path, stats_path: &Path) -> String {
        self.template
            .replace("{policy}", &shell_quote(policy_path))
            .replace("{stats}", &shell_quote(stats_path))
    }
}

fn shell_quote(path: &Path) -> String {
    format!("'{}'", path.display().to_string().replace('\'', r"'\''"))
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&self, policy: &Policy) -> Result<ScaleStats, EvaluatorError> {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let dir = self.workdir.join(format!("eval-{n:06}"));
        fs::create_dir_all(&dir)?;
        let policy_path = dir.join("policy.json");
        let stats_path = dir.join("stats.json");
        fs::write(&policy_path, serialize_policy(policy))?;
        let _ = fs::remove_file(&stats_path);

        let stderr_path = dir.join("stderr.log");
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(self.command_line(&policy_path, &stats_path))
            .current_dir(&dir)
            .stdin(Stdio::null())
            .stdout(File::create(dir.join("stdout.log"))?)
            .stderr(File::create(&stderr_path)?)
            .spawn()?;

        let status = match self.timeout {
            Some(limit) => match child.wait_timeout(limit)? {
                Some(status) => status,
                None => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(EvaluatorError::Timeout {
                        seconds: limit.as_secs_f64(),
                    });
                }
            },
            None => child.wait()?,
        };
        if !status.success() {
            let stderr = fs::read_to_string(&stderr_path).unwrap_or_default();
            return Err(EvaluatorError::Failed {
                status: status.to_string(),
                stderr: stderr.trim().chars().take(2000).collect(),
            });
        }
        let doc = fs::read_to_string(&stats_path).map_err(|e| {
            EvaluatorError::Other(format!(
                "stats file {} not readable: {e}",
                stats_path.display()
            ))
        })?;
        Ok(ScaleStats::from_json(&doc)?)
    }
}
