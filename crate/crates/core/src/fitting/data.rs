use super::FitError;
use crate::geometry::{AttachmentTable, PrimitiveBank};
use crate::inference::{HypothesisSpace, TrialView};
use crate::trials::ResolvedTrial;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

/// One row of a classification CSV: `k` of `n` respondents said yes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub trial_id: String,
    pub item: String,
    pub k: u32,
    pub n: u32,
}

/// One row of a generation CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub trial_id: String,
    pub token: String,
    pub participant_id: String,
}

pub fn read_classification_csv<R: Read>(r: R) -> Result<Vec<ClassificationRecord>, FitError> {
    let recs: Vec<ClassificationRecord> = csv::Reader::from_reader(r).deserialize().collect::<Result<_, _>>()?;
    if let Some(bad) = recs.iter().find(|r| r.k > r.n) {
        return Err(FitError::ConstraintViolation(format!("{} {}: k = {} > n = {}", bad.trial_id, bad.item, bad.k, bad.n)));
    }
    Ok(recs)
}

pub fn read_generation_csv<R: Read>(r: R) -> Result<Vec<GenerationRecord>, FitError> {
    Ok(csv::Reader::from_reader(r).deserialize().collect::<Result<_, _>>()?)
}

pub fn write_classification_csv<W: Write>(w: W, recs: &[ClassificationRecord]) -> Result<(), FitError> {
    let mut out = csv::Writer::from_writer(w);
    for r in recs {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_generation_csv<W: Write>(w: W, recs: &[GenerationRecord]) -> Result<(), FitError> {
    let mut out = csv::Writer::from_writer(w);
    for r in recs {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// A trial view whose queries are the rated items, with their counts.
#[derive(Debug, Clone)]
pub struct ClsTrialData {
    pub view: TrialView,
    /// `(query index, k, n)`.
    pub obs: Vec<(usize, u32, u32)>,
}

#[derive(Debug, Clone)]
pub struct GenTrialData {
    pub view: TrialView,
    pub tokens: Vec<u32>,
}

fn group<'a, T>(recs: &'a [T], id: impl Fn(&T) -> &str) -> BTreeMap<&'a str, Vec<&'a T>> {
    let mut m: BTreeMap<&str, Vec<&T>> = BTreeMap::new();
    for r in recs {
        m.entry(id(r)).or_default().push(r);
    }
    m
}

fn find<'a>(trials: &'a [ResolvedTrial], id: &str) -> Result<&'a ResolvedTrial, FitError> {
    trials.iter().find(|t| t.id() == id).ok_or_else(|| FitError::UnknownTrial(id.to_string()))
}

pub fn prepare_classification(
    space: &HypothesisSpace,
    trials: &[ResolvedTrial],
    recs: &[ClassificationRecord],
    bank: &PrimitiveBank,
    table: &AttachmentTable,
) -> Result<Vec<ClsTrialData>, FitError> {
    group(recs, |r| &r.trial_id)
        .into_iter()
        .map(|(id, rows)| {
            let t = find(trials, id)?;
            let mut queries = vec![];
            let mut obs = vec![];
            for r in rows {
                let y = t
                    .universe
                    .lookup(&r.item, bank, table)
                    .map_err(|source| FitError::Token { trial: id.to_string(), source })?;
                let q = queries.iter().position(|&v| v == y).unwrap_or_else(|| {
                    queries.push(y);
                    queries.len() - 1
                });
                obs.push((q, r.k, r.n));
            }
            let view = TrialView::from_parts(space, id, t.universe.clone(), &t.exemplars, &queries);
            Ok(ClsTrialData { view, obs })
        })
        .collect()
}

pub fn prepare_generation(
    space: &HypothesisSpace,
    trials: &[ResolvedTrial],
    recs: &[GenerationRecord],
    bank: &PrimitiveBank,
    table: &AttachmentTable,
) -> Result<Vec<GenTrialData>, FitError> {
    group(recs, |r| &r.trial_id)
        .into_iter()
        .map(|(id, rows)| {
            let t = find(trials, id)?;
            let tokens = rows
                .iter()
                .map(|r| t.universe.lookup(&r.token, bank, table))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|source| FitError::Token { trial: id.to_string(), source })?;
            let view = TrialView::from_parts(space, id, t.universe.clone(), &t.exemplars, &[]);
            Ok(GenTrialData { view, tokens })
        })
        .collect()
}
