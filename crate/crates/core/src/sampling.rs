//! Deterministic sampling of point tuples from a box.
//!
//! Tuple `i` of a random plan is drawn from ChaCha stream `i` of the plan's
//! seed, so a tuple depends only on `(seed, i)`. Scans over tuples can then be
//! split across threads and merged by index without changing the result.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bmetric::{Domain, Point};
use crate::error::{Error, Result};

/// Default cap on the number of tuples a grid plan may enumerate.
pub const DEFAULT_GRID_BUDGET: usize = 4_000_000;

/// How tuples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub seed: u64,
    /// Number of random tuples; ignored in grid mode.
    pub samples: usize,
    /// Points per axis for exhaustive grid enumeration.
    pub grid: Option<usize>,
    pub grid_budget: usize,
    pub parallel: bool,
}

impl SamplePlan {
    pub fn random(samples: usize, seed: u64) -> Self {
        SamplePlan {
            seed,
            samples,
            grid: None,
            grid_budget: DEFAULT_GRID_BUDGET,
            parallel: true,
        }
    }

    pub fn grid(points_per_axis: usize) -> Self {
        SamplePlan {
            seed: 0,
            samples: 0,
            grid: Some(points_per_axis),
            grid_budget: DEFAULT_GRID_BUDGET,
            parallel: true,
        }
    }

    pub fn sequential(mut self) -> Self {
        self.parallel = false;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.grid_budget = budget;
        self
    }
}

/// Tuples of `width` points drawn from a domain according to a plan.
#[derive(Debug, Clone)]
pub struct TupleSource<'a> {
    domain: &'a Domain,
    width: usize,
    mode: Mode,
}

#[derive(Debug, Clone)]
enum Mode {
    Random { seed: u64, count: usize },
    Grid { axes: Vec<Vec<f64>>, count: usize },
}

impl<'a> TupleSource<'a> {
    pub fn new(domain: &'a Domain, width: usize, plan: &SamplePlan) -> Result<Self> {
        let mode = match plan.grid {
            None => {
                if plan.samples == 0 {
                    return Err(Error::Usage("sample count must be at least 1".into()));
                }
                Mode::Random {
                    seed: plan.seed,
                    count: plan.samples,
                }
            }
            Some(g) => {
                if g == 0 {
                    return Err(Error::Usage("grid needs at least 1 point per axis".into()));
                }
                let digits = width * domain.dim();
                let count = u32::try_from(digits)
                    .ok()
                    .and_then(|d| g.checked_pow(d))
                    .filter(|&c| c <= plan.grid_budget)
                    .ok_or_else(|| {
                        Error::Usage(format!(
                            "grid of {g} points per axis over {digits} axes exceeds the budget of {} tuples",
                            plan.grid_budget
                        ))
                    })?;
                Mode::Grid {
                    axes: domain.axis_grids(g),
                    count,
                }
            }
        };
        Ok(TupleSource { domain, width, mode })
    }

    pub fn len(&self) -> usize {
        match self.mode {
            Mode::Random { count, .. } | Mode::Grid { count, .. } => count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn tuple(&self, index: usize) -> Vec<Point> {
        let m = self.domain.dim();
        match &self.mode {
            Mode::Random { seed, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(index as u64);
                (0..self.width).map(|_| self.domain.sample(&mut rng)).collect()
            }
            Mode::Grid { axes, .. } => {
                let g = axes.first().map_or(1, Vec::len);
                let mut rest = index;
                let mut out = Vec::with_capacity(self.width);
                for _ in 0..self.width {
                    let coords = (0..m)
                        .map(|axis| {
                            let j = rest % g;
                            rest /= g;
                            axes[axis][j]
                        })
                        .collect();
                    out.push(Point::from_vec_unchecked(coords));
                }
                // Most significant digit first so that index order is lexicographic.
                out.reverse();
                out
            }
        }
    }
}

/// Result of scanning a single tuple, merged across the whole source.
pub(crate) trait Summary: Send + Sized {
    fn merge(self, other: Self) -> Self;
}

/// Evaluates `eval` on every tuple index and merges the per-index summaries.
///
/// Errors are reported for the smallest failing index, which keeps the
/// outcome identical between sequential and parallel scans.
pub(crate) fn scan<S, F>(count: usize, parallel: bool, eval: F) -> Result<Option<S>>
where
    S: Summary,
    F: Fn(usize) -> Result<Option<S>> + Sync,
{
    type Acc<S> = std::result::Result<Option<S>, (usize, Error)>;
    let step = |i: usize| -> Acc<S> { eval(i).map_err(|e| (i, e)) };
    let merge = |a: Acc<S>, b: Acc<S>| -> Acc<S> {
        match (a, b) {
            (Err(ea), Err(eb)) => Err(if ea.0 <= eb.0 { ea } else { eb }),
            (Err(e), _) | (_, Err(e)) => Err(e),
            (Ok(None), x) | (x, Ok(None)) => x,
            (Ok(Some(x)), Ok(Some(y))) => Ok(Some(x.merge(y))),
        }
    };
    let out = if parallel {
        (0..count).into_par_iter().map(step).reduce(|| Ok(None), merge)
    } else {
        (0..count).map(step).fold(Ok(None), merge)
    };
    out.map_err(|(_, e)| e)
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * rng.gen::<f64>()
    }
}
