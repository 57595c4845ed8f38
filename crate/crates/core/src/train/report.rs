//! CSV artifacts: metrics, uncertainty sweeps and loss traces.
//!
//! Every file starts with a `#` comment line carrying the config hash and
//! seed, followed by a header row. Floats use Rust's shortest round-trip
//! formatting, so identical values always serialize to identical bytes.

use super::{ClassFilter, LossRecord, Metrics, MetricsReport, RankMode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactHeader {
    pub config_hash: String,
    pub seed: u64,
}

impl ArtifactHeader {
    pub fn line(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

fn with_header(header: Option<&ArtifactHeader>, columns: &str, rows: Vec<String>) -> String {
    let mut out = header.map(ArtifactHeader::line).unwrap_or_default();
    out.push_str(columns);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub split: String,
    pub mode: RankMode,
    pub class: ClassFilter,
    pub metrics: Metrics,
    pub mean_entropy: f64,
}

impl MetricsRow {
    /// The row for `class`, if the report has queries of that class.
    pub fn from_report(split: &str, report: &MetricsReport, class: ClassFilter) -> Option<Self> {
        report.class(class).map(|m| Self {
            split: split.to_string(),
            mode: report.mode,
            class,
            metrics: *m,
            mean_entropy: report.mean_entropy,
        })
    }
}

pub const METRICS_COLUMNS: &str = "split,mode,class,mrr,hits1,hits3,hits10,n_queries,mean_entropy";
pub const UNCERTAINTY_COLUMNS: &str = "k_shot,seed,hits1,entropy";
pub const LOSS_COLUMNS: &str = "epoch,task_idx,loss,kl,rank_loss";

pub fn metrics_csv(header: Option<&ArtifactHeader>, rows: &[MetricsRow]) -> String {
    with_header(
        header,
        METRICS_COLUMNS,
        rows.iter()
            .map(|r| {
                let m = &r.metrics;
                format!(
                    "{},{},{},{},{},{},{},{},{}",
                    r.split,
                    r.mode,
                    r.class.as_str(),
                    m.mrr,
                    m.hits1,
                    m.hits3,
                    m.hits10,
                    m.n_queries,
                    r.mean_entropy
                )
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyRow {
    pub k_shot: usize,
    pub seed: u64,
    pub hits1: f64,
    pub entropy: f64,
}

pub fn uncertainty_csv(header: Option<&ArtifactHeader>, rows: &[UncertaintyRow]) -> String {
    with_header(
        header,
        UNCERTAINTY_COLUMNS,
        rows.iter()
            .map(|r| format!("{},{},{},{}", r.k_shot, r.seed, r.hits1, r.entropy))
            .collect(),
    )
}

pub fn loss_trace_csv(header: Option<&ArtifactHeader>, records: &[LossRecord]) -> String {
    with_header(
        header,
        LOSS_COLUMNS,
        records
            .iter()
            .map(|r| format!("{},{},{},{},{}", r.epoch, r.task_idx, r.loss, r.kl, r.rank_loss))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_layout() {
        let row = MetricsRow {
            split: "test".into(),
            mode: RankMode::Filtered,
            class: ClassFilter::All,
            metrics: Metrics {
                mrr: 0.5,
                hits1: 0.25,
                hits3: 0.5,
                hits10: 1.0,
                n_queries: 4,
            },
            mean_entropy: -3.5,
        };
        let header = ArtifactHeader {
            config_hash: "abc".into(),
            seed: 7,
        };
        assert_eq!(
            metrics_csv(Some(&header), &[row]),
            "# config_hash=abc seed=7\n\
             split,mode,class,mrr,hits1,hits3,hits10,n_queries,mean_entropy\n\
             test,filtered,all,0.5,0.25,0.5,1,4,-3.5\n"
        );
    }

    #[test]
    fn trace_csv_has_one_line_per_record() {
        let r = LossRecord {
            epoch: 1,
            task_idx: 0,
            loss: 2.0,
            kl: 0.5,
            rank_loss: 1.5,
        };
        let csv = loss_trace_csv(None, &[r, r]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with(LOSS_COLUMNS));
    }
}
