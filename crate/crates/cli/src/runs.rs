//! Run-directory artifacts: resolved config, manifest, metrics files.
//!
//! Deterministic outputs (metrics, reports, exports) contain no wall-clock
//! data; timings live in their own file so reruns stay byte-identical.

use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use met_core::error::Result;
use met_core::trainer::EpochMetrics;

use crate::config::ExperimentConfig;

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// Create (or reuse) the directory and write `resolved_config.txt` and
    /// `manifest.txt`.
    pub fn create(path: &Path, cfg: &ExperimentConfig, command: &str) -> Result<RunDir> {
        std::fs::create_dir_all(path)?;
        let resolved = cfg.to_key_value();
        std::fs::write(path.join("resolved_config.txt"), &resolved)?;
        let mut hasher = Sha256::new();
        hasher.update(resolved.as_bytes());
        let hash = hasher.finalize();
        let manifest = format!(
            "command = {command}\nconfig-sha256 = {}\nseed = {}\nversion = met {}\n",
            hex_string(&hash),
            cfg.seed,
            env!("CARGO_PKG_VERSION"),
        );
        std::fs::write(path.join("manifest.txt"), manifest)?;
        Ok(RunDir { path: path.to_path_buf() })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// `metrics.csv`: one deterministic line per epoch.
    /// `timings.csv`: wall seconds per epoch, separate so metrics rerun
    /// byte-identical. With `append` (resumed runs), rows are added to the
    /// existing files instead of rewriting them.
    pub fn write_epoch_metrics(&self, metrics: &[EpochMetrics], append: bool) -> Result<()> {
        let with_distance = metrics.iter().any(|m| m.interclass_distance.is_some());
        let mut out = String::new();
        if !append {
            out.push_str("epoch,loss_std,loss_adv,loss_total");
            if with_distance {
                out.push_str(",interclass_distance");
            }
            out.push('\n');
        }
        for m in metrics {
            out.push_str(&format!("{},{},{},{}", m.epoch, m.loss_std, m.loss_adv, m.loss_total));
            if with_distance {
                match m.interclass_distance {
                    Some(d) => out.push_str(&format!(",{d}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        let mut timings = if append { String::new() } else { String::from("epoch,wall_secs\n") };
        for m in metrics {
            timings.push_str(&format!("{},{}\n", m.epoch, m.wall_secs));
        }
        if append && self.file("metrics.csv").exists() {
            use std::fs::OpenOptions;
            let mut f = OpenOptions::new().append(true).open(self.file("metrics.csv"))?;
            f.write_all(out.as_bytes())?;
            let mut f = OpenOptions::new().append(true).create(true).open(self.file("timings.csv"))?;
            f.write_all(timings.as_bytes())?;
        } else {
            std::fs::write(self.file("metrics.csv"), out)?;
            std::fs::write(self.file("timings.csv"), timings)?;
        }
        Ok(())
    }

    pub fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(self.file(name))?);
        writeln!(f, "{header}")?;
        for row in rows {
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
