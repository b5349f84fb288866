use serde::{Deserialize, Serialize};

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc,lr,wall_seconds";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate of the epoch's last optimizer step.
    pub lr: f64,
    pub wall_seconds: f64,
}

/// One row per completed epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub epochs: Vec<EpochMetrics>,
}

impl RunMetrics {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc, e.lr, e.wall_seconds
            ));
        }
        out
    }

    /// Epoch with the highest validation accuracy; ties go to the earliest.
    pub fn best(&self) -> Option<&EpochMetrics> {
        self.epochs
            .iter()
            .fold(None, |best: Option<&EpochMetrics>, e| match best {
                Some(b) if b.val_acc >= e.val_acc => Some(b),
                _ => Some(e),
            })
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }
}

/// Parse a metrics file written by [`RunMetrics::to_csv`].
pub fn parse_metrics_csv(text: &str) -> Result<RunMetrics, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_HEADER => {}
        other => return Err(format!("unexpected metrics header {other:?}")),
    }
    let mut epochs = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(format!("row {}: expected 7 fields, found {}", i + 1, f.len()));
        }
        let num = |k: usize| -> Result<f64, String> {
            f[k].trim()
                .parse::<f64>()
                .map_err(|e| format!("row {}: field {}: {e}", i + 1, k + 1))
        };
        epochs.push(EpochMetrics {
            epoch: f[0]
                .trim()
                .parse()
                .map_err(|e| format!("row {}: epoch: {e}", i + 1))?,
            train_loss: num(1)?,
            train_acc: num(2)?,
            val_loss: num(3)?,
            val_acc: num(4)?,
            lr: num(5)?,
            wall_seconds: num(6)?,
        });
    }
    Ok(RunMetrics { epochs })
}
