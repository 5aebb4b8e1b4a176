use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::SamplingConfig;

/// Run settings echoed into the report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(flatten)]
    pub sampling: SamplingConfig,
    /// Keep only the first N tracks of each case (ascending id); `None` keeps all.
    pub max_tracks: Option<usize>,
}

/// PSNR as a JSON number, `"inf"` for identical videos, or `null`.
mod psnr_json {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_infinite() => s.serialize_str("inf"),
            Some(x) => s.serialize_f64(*x),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Raw>::deserialize(d)? {
            None => Ok(None),
            Some(Raw::Num(x)) => Ok(Some(x)),
            Some(Raw::Str(s)) if s == "inf" => Ok(Some(f64::INFINITY)),
            Some(Raw::Str(s)) => Err(serde::de::Error::custom(format!("bad PSNR value {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: String,
    pub category: String,
    pub tracks_used: usize,
    pub epe: Option<f64>,
    #[serde(with = "psnr_json")]
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub cases: usize,
    pub failed: usize,
    pub epe_mean: Option<f64>,
    /// Mean over finite values; infinite ones are counted separately.
    pub psnr_mean: Option<f64>,
    pub psnr_infinite: usize,
    pub ssim_mean: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

impl Aggregate {
    pub fn from_cases(cases: &[CaseResult]) -> Self {
        Self {
            cases: cases.len(),
            failed: cases.iter().filter(|c| c.error.is_some()).count(),
            epe_mean: mean(cases.iter().filter_map(|c| c.epe)),
            psnr_mean: mean(cases.iter().filter_map(|c| c.psnr).filter(|p| p.is_finite())),
            psnr_infinite: cases
                .iter()
                .filter(|c| c.psnr.is_some_and(f64::is_infinite))
                .count(),
            ssim_mean: mean(cases.iter().filter_map(|c| c.ssim)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: u32,
    pub checkpoint_id: Option<String>,
    pub config: RunConfig,
    pub cases: Vec<CaseResult>,
    pub aggregate: Aggregate,
    /// Reserved; needs pretrained feature networks.
    pub fid: Option<f64>,
    /// Reserved; needs pretrained feature networks.
    pub fvd: Option<f64>,
}

impl EvalReport {
    pub fn new(checkpoint_id: Option<String>, config: RunConfig, cases: Vec<CaseResult>) -> Self {
        Self {
            format: 1,
            checkpoint_id,
            config,
            aggregate: Aggregate::from_cases(&cases),
            cases,
            fid: None,
            fvd: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_csv(&self) -> String {
        let num = |v: Option<f64>| match v {
            None => String::new(),
            Some(x) if x.is_infinite() => "inf".to_string(),
            Some(x) => x.to_string(),
        };
        let mut out = String::from("id,category,tracks_used,epe,psnr,ssim,error\n");
        for c in &self.cases {
            let err = c.error.as_deref().unwrap_or("").replace('"', "\"\"");
            out.push_str(&format!(
                "{},{},{},{},{},{},\"{}\"\n",
                c.id,
                c.category,
                c.tracks_used,
                num(c.epe),
                num(c.psnr),
                num(c.ssim),
                err
            ));
        }
        out
    }
}

/// One line of `run.log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Start {
        cases: usize,
        seed: u64,
    },
    Case {
        index: usize,
        id: String,
        status: String,
        detail: Option<String>,
    },
    Finish {
        failed: usize,
    },
}

/// Writes `report.json`, `summary.csv` and `run.log.jsonl` into `dir`.
pub fn write_outputs(report: &EvalReport, log: &[LogEvent], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let lines: String = log
        .iter()
        .map(|e| serde_json::to_string(e).expect("events serialize") + "\n")
        .collect();
    for (name, body) in [
        ("report.json", report.to_json()),
        ("summary.csv", report.to_csv()),
        ("run.log.jsonl", lines),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
