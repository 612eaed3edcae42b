use serde::Serialize;
use std::collections::HashMap;

use super::{Element, GeneratingSet, GroupModel};
use crate::error::{Error, Result};

/// Breadth-first enumeration of the Cayley ball `Kⁿ`, kept shell by shell.
#[derive(Clone, Debug)]
pub struct Ball {
    model: GroupModel,
    gens: GeneratingSet,
    shells: Vec<Vec<Element>>,
    lengths: HashMap<Element, u32>,
    exhausted: bool,
}

impl Ball {
    pub fn new(model: &GroupModel, gens: &GeneratingSet) -> Self {
        let e = model.identity();
        let mut lengths = HashMap::new();
        lengths.insert(e.clone(), 0);
        Ball {
            model: model.clone(),
            gens: gens.clone(),
            shells: vec![vec![e]],
            lengths,
            exhausted: false,
        }
    }

    /// Enumerates `Kⁿ` from scratch.
    pub fn enumerate(model: &GroupModel, gens: &GeneratingSet, n: u32, budget: usize) -> Result<Self> {
        let mut b = Ball::new(model, gens);
        b.extend_to(n, budget)?;
        Ok(b)
    }

    /// Grows the ball to radius `n`. Already computed shells are kept.
    pub fn extend_to(&mut self, n: u32, budget: usize) -> Result<()> {
        while self.radius() < n && !self.exhausted {
            let mut next = Vec::new();
            let r = self.radius() + 1;
            for x in self.shells.last().unwrap() {
                for g in self.gens.moves(&self.model) {
                    let y = self.model.multiply(x, g);
                    if !self.lengths.contains_key(&y) {
                        if self.lengths.len() >= budget {
                            return Err(Error::BudgetExceeded {
                                what: "ball enumeration",
                                partial: self.lengths.len(),
                                limit: budget,
                            });
                        }
                        self.lengths.insert(y.clone(), r);
                        next.push(y);
                    }
                }
            }
            if next.is_empty() {
                self.exhausted = true;
            }
            self.shells.push(next);
        }
        Ok(())
    }

    pub fn radius(&self) -> u32 {
        (self.shells.len() - 1) as u32
    }

    /// True once a shell came out empty, i.e. the generated subgroup is finite and fully listed.
    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn shell(&self, n: u32) -> &[Element] {
        self.shells.get(n as usize).map(|s| s.as_slice()).unwrap_or(&[])
    }

    /// Sizes `|Kⁿ|` for n = 0..=radius.
    pub fn sizes(&self) -> Vec<usize> {
        let mut acc = 0;
        self.shells
            .iter()
            .map(|s| {
                acc += s.len();
                acc
            })
            .collect()
    }

    pub fn length_of(&self, x: &Element) -> Option<u32> {
        self.lengths.get(x).copied()
    }

    /// Elements of the ball of radius `n ≤ radius()`, in breadth-first order.
    pub fn elements_within(&self, n: u32) -> impl Iterator<Item = &Element> {
        self.shells.iter().take(n as usize + 1).flatten()
    }

    pub fn model(&self) -> &GroupModel {
        &self.model
    }
}

/// Ball sizes with the fitted growth exponent.
#[derive(Clone, Debug, Serialize)]
pub struct GroupGrowth {
    pub sizes: Vec<(u32, usize)>,
    pub exponent: f64,
    pub residual: f64,
}

/// Least-squares slope and RMS residual of `ys` against `xs`.
pub(crate) fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let res = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - icpt - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, icpt, res)
}

/// Fits `log|Kⁿ|` against `log n` over the upper half of `1..=n_max`.
pub fn growth_profile(
    model: &GroupModel,
    gens: &GeneratingSet,
    n_max: u32,
    budget: usize,
) -> Result<GroupGrowth> {
    if n_max < 4 {
        return Err(Error::InvalidSpec("growth profile needs n_max >= 4".into()));
    }
    let ball = Ball::enumerate(model, gens, n_max, budget)?;
    let sizes: Vec<(u32, usize)> = ball
        .sizes()
        .into_iter()
        .enumerate()
        .map(|(n, s)| (n as u32, s))
        .collect();
    let last = sizes.last().map(|s| s.1).unwrap_or(1);
    let full: Vec<(u32, usize)> = (0..=n_max)
        .map(|n| sizes.get(n as usize).copied().unwrap_or((n, last)))
        .collect();
    let upper: Vec<&(u32, usize)> = full.iter().filter(|(n, _)| *n >= (n_max / 2).max(1)).collect();
    let xs: Vec<f64> = upper.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = upper.iter().map(|(_, s)| (*s as f64).ln()).collect();
    let (exponent, _, residual) = fit_line(&xs, &ys);
    Ok(GroupGrowth {
        sizes: full,
        exponent,
        residual,
    })
}
