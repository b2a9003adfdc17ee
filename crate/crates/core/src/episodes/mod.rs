//! Meta-learning episodes: support/query sets drawn from the prior (P), the
//! posterior predictive on fixture trials (R), partial-pattern templates (C)
//! or recorded human generations (H).

pub mod patterns;

pub use patterns::{gen_c, reconfigure_items, PatternBank, PatternKind, Template, P_COMPLETION, P_RECONFIGURE};

use crate::fitting::GenerationRecord;
use crate::geometry::{render_canvas, AttachmentTable, PrimitiveBank, Rgb};
use crate::grammar::{sample_program, Grammar, Lesions, SampleStats};
use crate::inference::{FitParams, HypothesisSpace, InferenceError, Posterior, TrialView};
use crate::interpreter::evaluate;
use crate::token::{parse_token, TokenError, Universe};
use crate::trials::{ResolvedTrial, Trial};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

pub const QUERY_SIZE: usize = 5;
pub const MAX_SUPPORT: usize = 6;
pub const IMAGE_PX: usize = 80;
const PRIOR_TRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    P,
    R,
    C,
    H,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::P, Source::R, Source::C, Source::H];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Completion,
    Reconfigure,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub source: Source,
    pub support: Vec<String>,
    pub query: Vec<String>,
    #[serde(default)]
    pub trial_ref: Option<String>,
    /// Per-query provenance, only for templated episodes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub query_kinds: Vec<QueryKind>,
}

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error("no usable partial-pattern template: {0}")]
    TemplateUnavailable(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("mix {0}")]
    Mix(String),
    #[error("source {0:?} requested but not configured")]
    MissingSource(Source),
    #[error("unknown trial {0}")]
    UnknownTrial(String),
    #[error("token {token}: {source}")]
    Token { token: String, source: TokenError },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn strings(u: &Universe, ts: &[u32]) -> Vec<String> {
    ts.iter().map(|&t| u.string(t).to_string()).collect()
}

/// A prior-sampled episode: draw a bank and a program from the prior,
/// rejecting empty extensions, then draw support and query uniformly from the
/// extension.
pub fn gen_p<R: Rng + ?Sized>(g: &Grammar, universes: &[Arc<Universe>], bank: &PrimitiveBank, rng: &mut R) -> Episode {
    let mut stats = SampleStats::default();
    let u = &universes[rng.gen_range(0..universes.len())];
    let mut found = None;
    for _ in 0..PRIOR_TRIES {
        let e = sample_program(g, u, rng, &mut stats);
        if let Ok(ext) = evaluate(&e, u) {
            found = Some((e.to_sexpr(bank), ext.tokens().to_vec()));
            break;
        }
    }
    let (program, members) = found.unwrap_or_else(|| {
        log::warn!("{PRIOR_TRIES} prior draws had empty extensions, using a singleton concept");
        let t = rng.gen_range(0..u.len() as u32);
        (format!("singleton {}", u.string(t)), vec![t])
    });
    episode_from_extension(u, &members, program, rng)
}

/// Support of 1 to 6 and query of 5 tokens drawn i.i.d. uniformly from a
/// concept's extension.
pub fn episode_from_extension<R: Rng + ?Sized>(u: &Universe, members: &[u32], program: String, rng: &mut R) -> Episode {
    let n = rng.gen_range(1..=MAX_SUPPORT);
    let support: Vec<u32> = (0..n).map(|_| members[rng.gen_range(0..members.len())]).collect();
    let query: Vec<u32> = (0..QUERY_SIZE).map(|_| members[rng.gen_range(0..members.len())]).collect();
    Episode { source: Source::P, support: strings(u, &support), query: strings(u, &query), trial_ref: Some(program), query_kinds: vec![] }
}

/// Posterior predictive samplers for every fixture trial.
pub struct PosteriorSource {
    trials: Vec<(String, Arc<Universe>, Vec<u32>, TrialView, Posterior<f64>)>,
    alpha: f64,
}

impl PosteriorSource {
    pub fn new(
        space: &HypothesisSpace,
        trials: &[ResolvedTrial],
        params: &FitParams,
        lesions: Lesions,
    ) -> Result<PosteriorSource, EpisodeError> {
        let mut out = vec![];
        for t in trials {
            let view = TrialView::new(space, t, &[]);
            let post = view.posterior::<f64>(params, lesions)?;
            out.push((t.id().to_string(), t.universe.clone(), t.exemplars.clone(), view, post));
        }
        Ok(PosteriorSource { trials: out, alpha: params.alpha })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }
}

/// A posterior-resampled episode: the support is a fixture trial's exemplar
/// set and the queries are drawn from its posterior predictive.
pub fn gen_r<R: Rng + ?Sized>(src: &PosteriorSource, rng: &mut R) -> Result<Episode, EpisodeError> {
    if src.is_empty() {
        return Err(EpisodeError::MissingSource(Source::R));
    }
    let (id, u, xs, view, post) = &src.trials[rng.gen_range(0..src.len())];
    let query: Vec<u32> = (0..QUERY_SIZE).map(|_| post.sample_predictive(view, src.alpha, rng)).collect();
    Ok(Episode { source: Source::R, support: strings(u, xs), query: strings(u, &query), trial_ref: Some(id.clone()), query_kinds: vec![] })
}

/// Convert human generation records to episodes verbatim: one episode per
/// trial and participant, support = the trial's exemplars, query = that
/// participant's tokens in file order. Tokens are checked for geometric
/// validity but not rewritten.
pub fn ingest_human(
    trials: &[Trial],
    recs: &[GenerationRecord],
    bank: &PrimitiveBank,
    table: &AttachmentTable,
) -> Result<Vec<Episode>, EpisodeError> {
    let mut groups: BTreeMap<(&str, &str), Vec<&str>> = BTreeMap::new();
    for r in recs {
        groups.entry((&r.trial_id, &r.participant_id)).or_default().push(&r.token);
    }
    groups
        .into_iter()
        .map(|((tid, _), tokens)| {
            let t = trials.iter().find(|t| t.trial_id == tid).ok_or_else(|| EpisodeError::UnknownTrial(tid.to_string()))?;
            for s in &tokens {
                parse_token(s, bank, table).map_err(|source| EpisodeError::Token { token: s.to_string(), source })?;
            }
            Ok(Episode {
                source: Source::H,
                support: t.exemplars.clone(),
                query: tokens.into_iter().map(String::from).collect(),
                trial_ref: Some(tid.to_string()),
                query_kinds: vec![],
            })
        })
        .collect()
}

/// Per-block source counts, written `P/R/C/H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mix(pub [usize; 4]);

impl Mix {
    pub fn block(&self) -> usize {
        self.0.iter().sum()
    }
}

impl FromStr for Mix {
    type Err = EpisodeError;

    fn from_str(s: &str) -> Result<Mix, EpisodeError> {
        let v: Vec<usize> = s
            .split('/')
            .map(|x| x.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| EpisodeError::Mix(format!("{s:?}: {e}")))?;
        let arr: [usize; 4] = v.try_into().map_err(|_| EpisodeError::Mix(format!("{s:?} needs four counts P/R/C/H")))?;
        if arr.iter().sum::<usize>() == 0 {
            return Err(EpisodeError::Mix("empty block".into()));
        }
        Ok(Mix(arr))
    }
}

impl std::fmt::Display for Mix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [p, r, c, h] = self.0;
        write!(f, "{p}/{r}/{c}/{h}")
    }
}

/// Everything the four sources need. Sources with a zero count in the mix
/// may be left out.
pub struct Sources<'a> {
    pub prior: Option<(&'a Grammar, &'a [Arc<Universe>], &'a PrimitiveBank)>,
    pub posterior: Option<&'a PosteriorSource>,
    pub patterns: Option<&'a PatternBank>,
    pub human: Option<&'a [Episode]>,
}

/// Write `n` episodes as JSONL in blocks that each hold exactly the mix
/// counts, shuffled within the block. Every source draws from its own RNG
/// stream of `seed`. Returns the per-source totals.
pub fn export_episodes<W: Write>(src: &Sources, mix: Mix, n: usize, seed: u64, out: W) -> Result<[usize; 4], EpisodeError> {
    let block = mix.block();
    if n % block != 0 {
        return Err(EpisodeError::Mix(format!("{n} episodes is not a whole number of {block}-episode blocks")));
    }
    for (i, s) in Source::ALL.iter().enumerate() {
        let present = match s {
            Source::P => src.prior.is_some(),
            Source::R => src.posterior.is_some(),
            Source::C => src.patterns.is_some(),
            Source::H => src.human.is_some_and(|h| !h.is_empty()),
        };
        if mix.0[i] > 0 && !present {
            return Err(EpisodeError::MissingSource(*s));
        }
    }
    let mut rngs: Vec<ChaCha8Rng> = (0..5)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i);
            r
        })
        .collect();
    let mut out = std::io::BufWriter::new(out);
    let mut totals = [0usize; 4];
    for _ in 0..n / block {
        let mut eps = Vec::with_capacity(block);
        for (i, s) in Source::ALL.iter().enumerate() {
            let rng = &mut rngs[i];
            for _ in 0..mix.0[i] {
                eps.push(match s {
                    Source::P => {
                        let (g, us, bank) = src.prior.expect("checked");
                        gen_p(g, us, bank, rng)
                    }
                    Source::R => gen_r(src.posterior.expect("checked"), rng)?,
                    Source::C => gen_c(src.patterns.expect("checked"), rng, P_COMPLETION, P_RECONFIGURE)?,
                    Source::H => src.human.expect("checked").choose(rng).expect("nonempty").clone(),
                });
                totals[i] += 1;
            }
        }
        eps.shuffle(&mut rngs[4]);
        for e in &eps {
            serde_json::to_writer(&mut out, e).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(totals)
}

/// Parse an episode JSONL stream, skipping blank lines.
pub fn read_episodes<R: BufRead>(r: R) -> Result<Vec<Episode>, EpisodeError> {
    let mut out = vec![];
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Episode = serde_json::from_str(&line).map_err(|e| EpisodeError::Parse { line: i + 1, msg: e.to_string() })?;
        if e.support.is_empty() {
            return Err(EpisodeError::Parse { line: i + 1, msg: "empty support".into() });
        }
        out.push(e);
    }
    Ok(out)
}

/// File name used for a token's raster.
pub fn image_name(token: &str) -> String {
    let safe: String = token.chars().map(|c| if c == ':' { '_' } else { c }).collect();
    format!("{safe}.png")
}

/// Render every distinct token in `episodes` to an 80×80 PNG in `dir`.
/// Returns the number of files written.
pub fn materialize_images(
    episodes: &[Episode],
    bank: &PrimitiveBank,
    table: &AttachmentTable,
    dir: &Path,
) -> Result<usize, EpisodeError> {
    std::fs::create_dir_all(dir)?;
    let palette: Vec<Rgb> = bank.ids().map(|p| bank.color(p)).collect();
    let mut done = std::collections::HashSet::new();
    for s in episodes.iter().flat_map(|e| e.support.iter().chain(&e.query)) {
        if !done.insert(s.as_str()) {
            continue;
        }
        let t = parse_token(s, bank, table).map_err(|source| EpisodeError::Token { token: s.clone(), source })?;
        let r = render_canvas(&t.cells, &palette, IMAGE_PX)
            .map_err(|e| EpisodeError::Token { token: s.clone(), source: e.into() })?;
        std::fs::write(dir.join(image_name(s)), r.to_png())?;
    }
    Ok(done.len())
}
