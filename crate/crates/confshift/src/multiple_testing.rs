//! FDR-controlling selection: BH for unweighted p-values, the two-stage
//! weighted conformal selection (WCS) for weighted ones.
//!
//! BH rejects the k smallest p-values with k = max{r : p_(r) <= alpha r/m}.
//!
//! WCS runs in two stages. Stage one finds the self-consistency fixed point
//!
//! ```text
//!     R* = max{ r : #{ j : p_j <= alpha r/m } >= r },    S = { j : p_j <= alpha R*/m }
//! ```
//!
//! so the number of rejections supports the threshold that produced them.
//! Stage two prunes S down to R* members when it overshoots, by one of three
//! strategies: deterministic (strict counting: keep the R* smallest, ties by
//! index), homogeneous (one shared xi ~ U, keep j iff r_j - xi < R*), or
//! heterogeneous (per-member xi_j). xi is drawn from (0,1]; the open left
//! endpoint keeps every rejected p-value at or below the recorded threshold.
//!
//! This fixed-point variant is a documented approximation of the WCS
//! construction in the literature, which derives per-candidate auxiliary
//! p-values; reports carry `wcs_approx = true` to say so. On the p-value
//! vectors produced here it behaves like BH up to ties, which is also why
//! all three pruning strategies almost always agree.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::PValueVector;
use crate::error::{Error, Result};

/// Which selection procedure produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    Bh,
    WcsDet,
    WcsHom,
    WcsHet,
}

impl std::fmt::Display for Procedure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Procedure::Bh => "bh",
            Procedure::WcsDet => "wcs_det",
            Procedure::WcsHom => "wcs_hom",
            Procedure::WcsHet => "wcs_het",
        };
        write!(f, "{s}")
    }
}

/// Pruning strategy for the second WCS stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneStrategy {
    Deterministic,
    Homogeneous,
    Heterogeneous,
}

impl std::fmt::Display for PruneStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PruneStrategy::Deterministic => "deterministic",
            PruneStrategy::Homogeneous => "homogeneous",
            PruneStrategy::Heterogeneous => "heterogeneous",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for PruneStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic" => Ok(PruneStrategy::Deterministic),
            "homogeneous" => Ok(PruneStrategy::Homogeneous),
            "heterogeneous" => Ok(PruneStrategy::Heterogeneous),
            other => Err(Error::config(format!(
                "unknown pruning strategy {other:?}"
            ))),
        }
    }
}

/// Final rejection set with the cutoff that justified it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionReport {
    /// Rejected test indices, sorted ascending, zero-based.
    pub rejected: Vec<usize>,
    pub procedure: Procedure,
    pub alpha: f64,
    /// Final p-value cutoff: alpha * |rejected| / m.
    pub threshold: f64,
    pub prune_seed: Option<u64>,
    /// True for WCS reports: the fixed-point variant implemented here
    /// approximates the full candidate-dependent construction.
    pub wcs_approx: bool,
}

impl DecisionReport {
    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::domain(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    Ok(())
}

/// Benjamini-Hochberg step-up at level alpha.
pub fn benjamini_hochberg(p: &PValueVector, alpha: f64) -> Result<DecisionReport> {
    check_alpha(alpha)?;
    p.validate()?;
    let m = p.len();
    let mut sorted: Vec<f64> = p.values.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut k = 0usize;
    for r in 1..=m {
        if sorted[r - 1] <= alpha * r as f64 / m as f64 {
            k = r;
        }
    }
    let threshold = alpha * k as f64 / m as f64;
    let rejected: Vec<usize> = (0..m).filter(|&j| p.values[j] <= threshold).collect();
    debug_assert_eq!(rejected.len(), k, "BH k and threshold count must agree");
    Ok(DecisionReport {
        rejected,
        procedure: Procedure::Bh,
        alpha,
        threshold,
        prune_seed: None,
        wcs_approx: false,
    })
}

/// First-stage WCS output: the candidate set and its fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct WcsSelection {
    /// Candidate indices, sorted ascending.
    pub candidates: Vec<usize>,
    pub r_star: usize,
}

/// Self-consistency fixed point: the largest r whose threshold alpha r/m is
/// met by at least r p-values. R* = 0 yields an empty candidate set.
pub fn wcs_select(p: &PValueVector, alpha: f64) -> Result<WcsSelection> {
    check_alpha(alpha)?;
    p.validate()?;
    let m = p.len();
    let mut sorted: Vec<f64> = p.values.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut r_star = 0usize;
    for r in 1..=m {
        let cutoff = alpha * r as f64 / m as f64;
        let count = sorted.partition_point(|v| *v <= cutoff);
        if count >= r {
            r_star = r;
        }
    }
    let candidates = if r_star == 0 {
        Vec::new()
    } else {
        let cutoff = alpha * r_star as f64 / m as f64;
        (0..m).filter(|&j| p.values[j] <= cutoff).collect()
    };
    Ok(WcsSelection { candidates, r_star })
}

/// Keep members whose 1-based rank satisfies rank - offset < R*.
fn keep_by_offset(ranked: &[usize], r_star: usize, offset: impl Fn(usize) -> f64) -> Vec<usize> {
    ranked
        .iter()
        .enumerate()
        .filter(|(pos, _)| (pos + 1) as f64 - offset(*pos) < r_star as f64)
        .map(|(_, &j)| j)
        .collect()
}

/// Second-stage pruning. `selection` must come from `wcs_select` on the same
/// p-values; randomized strategies require a seed, drawn xi in (0,1].
pub fn wcs_prune(
    selection: &WcsSelection,
    p: &PValueVector,
    alpha: f64,
    strategy: PruneStrategy,
    seed: Option<u64>,
) -> Result<DecisionReport> {
    check_alpha(alpha)?;
    p.validate()?;
    let m = p.len();
    if selection.candidates.iter().any(|&j| j >= m) {
        return Err(Error::domain("candidate index out of range"));
    }
    let procedure = match strategy {
        PruneStrategy::Deterministic => Procedure::WcsDet,
        PruneStrategy::Homogeneous => Procedure::WcsHom,
        PruneStrategy::Heterogeneous => Procedure::WcsHet,
    };
    if strategy != PruneStrategy::Deterministic && seed.is_none() {
        return Err(Error::config(format!(
            "{strategy} pruning needs a seed"
        )));
    }
    let prune_seed = match strategy {
        PruneStrategy::Deterministic => None,
        _ => seed,
    };

    let s_size = selection.candidates.len();
    let r_star = selection.r_star;
    let mut rejected: Vec<usize> = if s_size <= r_star {
        selection.candidates.clone()
    } else {
        // Rank within S by p-value, ties by index.
        let mut ranked = selection.candidates.clone();
        ranked.sort_by(|&a, &b| p.values[a].total_cmp(&p.values[b]).then(a.cmp(&b)));
        match strategy {
            PruneStrategy::Deterministic => ranked[..r_star].to_vec(),
            PruneStrategy::Homogeneous => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap());
                let xi = 1.0 - rng.gen::<f64>(); // (0,1]
                keep_by_offset(&ranked, r_star, |_| xi)
            }
            PruneStrategy::Heterogeneous => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap());
                let xis: Vec<f64> = (0..ranked.len()).map(|_| 1.0 - rng.gen::<f64>()).collect();
                keep_by_offset(&ranked, r_star, |pos| xis[pos])
            }
        }
    };
    rejected.sort_unstable();
    let threshold = alpha * rejected.len() as f64 / m.max(1) as f64;
    Ok(DecisionReport {
        rejected,
        procedure,
        alpha,
        threshold,
        prune_seed,
        wcs_approx: true,
    })
}

/// Both WCS stages in one call.
pub fn wcs_decide(
    p: &PValueVector,
    alpha: f64,
    strategy: PruneStrategy,
    seed: Option<u64>,
) -> Result<DecisionReport> {
    let selection = wcs_select(p, alpha)?;
    wcs_prune(&selection, p, alpha, strategy, seed)
}
