//! Result records: what a run produces, how it is keyed, and how it is
//! exported.
//!
//! The payload is the reproducible part — identical seeded runs serialize
//! to identical payload bytes.  Wall-clock facts live in a separate
//! envelope that never enters hashing or equality.

use serde::{Deserialize, Serialize};

use crate::experiments::{AmplitudeReport, Campaign, SharpnessReport, SweepConfig};

/// The reproducible body of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordPayload {
    pub campaign: Campaign,
    pub config_hash: String,
    pub config: SweepConfig,
    pub seed: u64,
    pub version: String,
    pub report: ReportBody,
}

// records are few and short-lived; boxing the big variant buys nothing
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReportBody {
    Amplitude(AmplitudeReport),
    Sharpness(SharpnessReport),
}

impl ReportBody {
    pub fn pass(&self) -> bool {
        match self {
            ReportBody::Amplitude(r) => r.pass,
            ReportBody::Sharpness(r) => r.pass,
        }
    }
}

/// Non-reproducible run facts, kept out of equality on purpose.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunMeta {
    pub wall_ms: u64,
    pub created_unix: u64,
    pub phase_eval_estimate: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub payload: RecordPayload,
    pub meta: RunMeta,
}

impl PartialEq for ResultRecord {
    fn eq(&self, other: &Self) -> bool {
        self.payload == other.payload
    }
}

impl ResultRecord {
    pub fn new(payload: RecordPayload, meta: RunMeta) -> Self {
        ResultRecord { payload, meta }
    }

    /// Canonical bytes of the reproducible part.
    pub fn payload_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.payload).expect("payload serializes")
    }
}

pub fn make_payload(
    campaign: Campaign,
    config_hash: String,
    config: &SweepConfig,
    report: ReportBody,
) -> RecordPayload {
    RecordPayload {
        campaign,
        config_hash,
        config: config.clone(),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        report,
    }
}

/// Fixed CSV column set; downstream notebooks key on these names.
pub const CSV_HEADER: &str = "campaign,d,sigma,R,p,lhs,rhs,ratio,M,comparability,lhs_slope,lhs_predicted,rhs_slope,rhs_predicted,ratio_slope,pass";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Flatten a record into CSV rows (header first).  Every row repeats the
/// sweep-level fit columns so each line stands alone.
pub fn to_csv(record: &ResultRecord) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let campaign = record.payload.campaign.name();
    match &record.payload.report {
        ReportBody::Sharpness(rep) => {
            for row in &rep.rows {
                let cols = [
                    campaign.to_string(),
                    rep.d.to_string(),
                    fmt(rep.sigma),
                    fmt(row.r),
                    fmt(rep.p_exponent),
                    fmt(row.lhs),
                    fmt(row.rhs),
                    fmt(row.ratio),
                    row.m.to_string(),
                    row.comparability.map(fmt).unwrap_or_default(),
                    fmt(rep.lhs_fit.slope),
                    fmt(rep.lhs_fit.predicted),
                    fmt(rep.rhs_fit.slope),
                    fmt(rep.rhs_fit.predicted),
                    fmt(rep.ratio_fit.slope),
                    rep.pass.to_string(),
                ];
                out.push_str(&cols.join(","));
                out.push('\n');
            }
        }
        ReportBody::Amplitude(rep) => {
            for row in &rep.rows {
                let cols = [
                    campaign.to_string(),
                    rep.d.to_string(),
                    fmt(rep.sigma),
                    fmt(row.r),
                    String::new(),
                    fmt(row.stats.median_ratio * row.stats.predicted),
                    fmt(row.stats.predicted),
                    fmt(row.stats.median_ratio),
                    String::from("0"),
                    String::new(),
                    fmt(rep.fit.slope),
                    fmt(rep.fit.predicted),
                    String::new(),
                    String::new(),
                    String::new(),
                    rep.pass.to_string(),
                ];
                out.push_str(&cols.join(","));
                out.push('\n');
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{ExponentFit, HypothesisChecks, SweepRow};

    fn fake_fit(slope: f64, predicted: f64) -> ExponentFit {
        ExponentFit {
            slope,
            intercept: 0.0,
            max_residual: 0.01,
            predicted,
            tol: 0.05,
            eps_slack: 0.05,
            pass: true,
        }
    }

    fn fake_report() -> SharpnessReport {
        SharpnessReport {
            campaign: Campaign::Decoupling,
            d: 2,
            sigma: 0.25,
            p_exponent: 6.0,
            rows: vec![SweepRow {
                r: 256.0,
                lhs: 0.5,
                rhs: 0.75,
                ratio: 0.5 / 0.75,
                m: 3,
                comparability: Some(2.5),
                comparability_all: Some(4.0),
                incidence_max: None,
                fractal_c: None,
                x_cubes: 40,
                freq_cubes: 3,
            }],
            lhs_fit: fake_fit(-0.54, -0.5417),
            rhs_fit: fake_fit(-0.53, -0.5417),
            ratio_fit: fake_fit(-0.01, 0.0),
            m_fit: None,
            incidence_fit: None,
            hypothesis: HypothesisChecks {
                comparability_bound: 8.0,
                worst_comparability: Some(2.5),
                comparability_pass: true,
                fractal_bound: None,
                worst_fractal: None,
                fractal_pass: None,
                notes: vec![],
            },
            pass: true,
        }
    }

    #[test]
    fn csv_header_is_pinned() {
        assert_eq!(
            CSV_HEADER,
            "campaign,d,sigma,R,p,lhs,rhs,ratio,M,comparability,lhs_slope,lhs_predicted,rhs_slope,rhs_predicted,ratio_slope,pass"
        );
    }

    #[test]
    fn csv_rows_match_the_header_width() {
        let cfg = SweepConfig::default_for(2, 0.25).unwrap();
        let payload = make_payload(
            Campaign::Decoupling,
            "deadbeef".into(),
            &cfg,
            ReportBody::Sharpness(fake_report()),
        );
        let record = ResultRecord::new(payload, RunMeta::default());
        let csv = to_csv(&record);
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert_eq!(header, CSV_HEADER);
        let n_cols = header.split(',').count();
        for line in lines {
            assert_eq!(line.split(',').count(), n_cols, "line: {line}");
        }
        assert!(csv.contains("decoupling,2,"));
    }

    #[test]
    fn equality_ignores_the_envelope() {
        let cfg = SweepConfig::default_for(2, 0.25).unwrap();
        let payload = make_payload(
            Campaign::Decoupling,
            "deadbeef".into(),
            &cfg,
            ReportBody::Sharpness(fake_report()),
        );
        let a = ResultRecord::new(
            payload.clone(),
            RunMeta {
                wall_ms: 10,
                created_unix: 1,
                phase_eval_estimate: 5,
            },
        );
        let b = ResultRecord::new(
            payload,
            RunMeta {
                wall_ms: 99,
                created_unix: 2,
                phase_eval_estimate: 5,
            },
        );
        assert_eq!(a, b);
        assert_eq!(a.payload_bytes(), b.payload_bytes());
    }

    #[test]
    fn floats_round_trip_through_the_csv_format() {
        let v = std::f64::consts::PI / 3.0;
        let s = fmt(v);
        let back: f64 = s.parse().unwrap();
        assert_eq!(v.to_bits(), back.to_bits());
    }
}
