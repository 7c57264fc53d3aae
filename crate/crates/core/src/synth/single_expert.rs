//! A one-expert binary world where the best weight may be finite, may not
//! matter at all, or may only be approached as the weight diverges.
//!
//! Inputs `x ∈ {0, 1}` are equally likely and `g(x, y) = 2|y − x|`, so the
//! expected reward under weight `ω` is `σ(ω r₀) + σ(ω r₁)` with
//! `r₀ = log p(1|0)/p(0|0)` and `r₁ = log p(0|1)/p(1|1)`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::math::sigmoid;
use crate::pool::{expected_reward, slop_distribution, OutputSpace, ScoreMatrix, WeightVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleExpertWorld {
    pub ratios: [f64; 2],
}

impl SingleExpertWorld {
    /// Expected reward, computed through the pooled distribution of each
    /// input.
    pub fn expected_reward(&self, omega: f64) -> Result<f64> {
        let space = OutputSpace::new(["0", "1"])?;
        let w = WeightVector::new(vec![omega])?;
        let mut total = 0.0;
        for (x, r) in self.ratios.iter().enumerate() {
            // p(1−x | x) = σ(r)
            let p_flip = sigmoid(*r);
            let mut log_p = [0.0; 2];
            log_p[1 - x] = p_flip.ln();
            log_p[x] = (1.0 - p_flip).ln();
            let scores = ScoreMatrix::new(space.clone(), vec![log_p.to_vec()])?;
            let pi = slop_distribution(&scores, &w)?;
            let g: Vec<f64> = (0..2).map(|y| 2.0 * (y as f64 - x as f64).abs()).collect();
            total += 0.5 * expected_reward(&pi, &g)?;
        }
        Ok(total)
    }

    pub fn derivative(&self, omega: f64) -> f64 {
        self.ratios
            .iter()
            .map(|&r| {
                let s = sigmoid(omega * r);
                r * s * (1.0 - s)
            })
            .sum()
    }

    /// `2` when both ratios are nonzero, `1.5` when exactly one is, `1`
    /// otherwise.
    pub fn supremum(&self) -> f64 {
        1.0 + 0.5 * self.ratios.iter().filter(|r| **r != 0.0).count() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleExpertReport {
    pub flat_ratios: [f64; 2],
    /// `(ω, reward)` for the all-zero-ratio world.
    pub flat: Vec<(f64, f64)>,
    pub interior_ratios: [f64; 2],
    pub interior_maximizer: f64,
    pub interior_value: f64,
    pub interior_gradient: f64,
    pub divergent_ratios: [f64; 2],
    pub divergent_omega: f64,
    pub divergent_value: f64,
    pub divergent_supremum: f64,
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Maximizer of a world with opposite-sign ratios: golden-section search,
/// then bisection on the derivative to full precision.
pub fn interior_maximizer(world: &SingleExpertWorld) -> f64 {
    let reward = |w: f64| sigmoid(w * world.ratios[0]) + sigmoid(w * world.ratios[1]);
    let rough = golden_section(reward, -50.0, 50.0, 80);
    let (mut lo, mut hi) = (rough - 1.0, rough + 1.0);
    // the derivative is positive left of the maximizer
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if world.derivative(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if world.derivative(lo).abs() < world.derivative(hi).abs() {
        lo
    } else {
        hi
    }
}

pub fn single_expert_cases() -> Result<SingleExpertReport> {
    let flat_world = SingleExpertWorld { ratios: [0.0, 0.0] };
    let flat = [-10.0, 0.0, 10.0]
        .into_iter()
        .map(|w| Ok((w, flat_world.expected_reward(w)?)))
        .collect::<Result<Vec<_>>>()?;

    // (1, −1) is flat in ω; unequal magnitudes give a single interior peak
    let interior = SingleExpertWorld { ratios: [2.0, -1.0] };
    let w_star = interior_maximizer(&interior);

    let divergent = SingleExpertWorld { ratios: [1.0, 2.0] };
    let omega = 50.0;

    Ok(SingleExpertReport {
        flat_ratios: flat_world.ratios,
        flat,
        interior_ratios: interior.ratios,
        interior_maximizer: w_star,
        interior_value: interior.expected_reward(w_star)?,
        interior_gradient: interior.derivative(w_star),
        divergent_ratios: divergent.ratios,
        divergent_omega: omega,
        divergent_value: divergent.expected_reward(omega)?,
        divergent_supremum: divergent.supremum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_reward_matches_sigmoid_form() {
        let w = SingleExpertWorld { ratios: [0.7, -1.3] };
        for omega in [-3.0, -0.5, 0.0, 1.0, 4.0] {
            let direct = sigmoid(omega * 0.7) + sigmoid(-omega * 1.3);
            assert!((w.expected_reward(omega).unwrap() - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let w = SingleExpertWorld { ratios: [2.0, -1.0] };
        for omega in [-1.0, 0.3, 1.2] {
            let h = 1e-6;
            let fd = (w.expected_reward(omega + h).unwrap() - w.expected_reward(omega - h).unwrap()) / (2.0 * h);
            assert!((fd - w.derivative(omega)).abs() < 1e-8);
        }
    }

    #[test]
    fn supremum_counts_nonzero_ratios() {
        assert_eq!(SingleExpertWorld { ratios: [0.0, 0.0] }.supremum(), 1.0);
        assert_eq!(SingleExpertWorld { ratios: [0.0, -3.0] }.supremum(), 1.5);
        assert_eq!(SingleExpertWorld { ratios: [1.0, 2.0] }.supremum(), 2.0);
    }

    #[test]
    fn cases() {
        let r = single_expert_cases().unwrap();
        assert!(r.flat.iter().all(|&(_, v)| v == 1.0));
        assert!(r.interior_gradient.abs() <= 1e-8);
        assert!(r.interior_maximizer > 0.0 && r.interior_maximizer.is_finite());
        let i = SingleExpertWorld { ratios: r.interior_ratios };
        for d in [-0.1, 0.1] {
            assert!(i.expected_reward(r.interior_maximizer + d).unwrap() < r.interior_value);
        }
        assert!((r.divergent_value - 2.0).abs() <= 1e-6);
    }
}
