//! Oracle-labelled state records and their delimiter-separated file format.
//!
//! Header: `env_id,episode,cycle,label,f0,f1,...`; one record per line with
//! the label as a single character from `INGSCE`.

use std::io::{Read, Write};

use super::{features, oracle_label, DifficultyLabel};
use crate::envs::DemoSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub env_id: String,
    pub episode: usize,
    pub cycle: usize,
    pub label: DifficultyLabel,
    pub features: Vec<f64>,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.features.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidData(format!(
                "non-finite features in {} episode {}",
                self.env_id, self.episode
            )))
        }
    }
}

/// Labels every `stride`-th state of every demonstration plus its final state.
pub fn annotate_demos(set: &DemoSet, d_near: f64, stride: usize) -> Result<Vec<AnnotationRecord>> {
    if stride == 0 {
        return Err(Error::InvalidConfig(
            "annotation stride must be at least 1".into(),
        ));
    }
    let mut out = Vec::new();
    for (e, demo) in set.demos.iter().enumerate() {
        let states = demo.states(set.task)?;
        let last = states.len() - 1;
        for (k, s) in states.iter().enumerate() {
            if k % stride == 0 || k == last {
                out.push(AnnotationRecord {
                    env_id: set.task.name().to_string(),
                    episode: e,
                    cycle: k / stride,
                    label: oracle_label(s, d_near),
                    features: features(s),
                });
            }
        }
    }
    Ok(out)
}

pub fn write_annotations<W: Write>(records: &[AnnotationRecord], w: W) -> Result<()> {
    let dim = records.first().map_or(0, |r| r.features.len());
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec![
        "env_id".to_string(),
        "episode".into(),
        "cycle".into(),
        "label".into(),
    ];
    header.extend((0..dim).map(|i| format!("f{i}")));
    wr.write_record(&header)?;
    for r in records {
        if r.features.len() != dim {
            return Err(Error::InvalidData(
                "annotation records have differing feature lengths".into(),
            ));
        }
        let mut row = vec![
            r.env_id.clone(),
            r.episode.to_string(),
            r.cycle.to_string(),
            r.label.to_string(),
        ];
        // Shortest round-trip formatting keeps values bit-exact on reload.
        row.extend(r.features.iter().map(|v| format!("{v:?}")));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_annotations<R: Read>(r: R) -> Result<Vec<AnnotationRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    let fixed = ["env_id", "episode", "cycle", "label"];
    if header.len() < fixed.len() || header.iter().zip(fixed).any(|(h, f)| h != f) {
        return Err(Error::Format(format!(
            "annotation header must start with {}",
            fixed.join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Format(format!("annotation row {}: bad {what}", line + 1));
        let features = rec
            .iter()
            .skip(4)
            .map(|v| v.parse::<f64>().map_err(|_| bad("feature")))
            .collect::<Result<Vec<_>>>()?;
        let r = AnnotationRecord {
            env_id: rec[0].to_string(),
            episode: rec[1].parse().map_err(|_| bad("episode"))?,
            cycle: rec[2].parse().map_err(|_| bad("cycle"))?,
            label: rec[3].parse().map_err(|_| bad("label"))?,
            features,
        };
        r.validate().map_err(|_| bad("non-finite feature"))?;
        out.push(r);
    }
    Ok(out)
}
