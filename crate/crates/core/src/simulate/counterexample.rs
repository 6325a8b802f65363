//! The factorial-block pair: with `a_m = m!`, a standard Pareto(alpha)
//! draw `Z` in an odd block `[a_m, a_{m+1})` gives `(Z, Z)`, and in an even
//! block two independent Pareto draws restricted to that block.
//!
//! Block boundaries are handled as logarithms so ranks far beyond the range
//! of `f64` factorials stay usable.

use rand::Rng;
use rand::distr::Open01;

/// `ln(m!)`.
pub fn ln_factorial(m: u64) -> f64 {
    (2..=m).map(|j| (j as f64).ln()).sum()
}

/// The rank `m >= 1` with `a_m <= z < a_{m+1}`, from `ln z`.
pub fn counterexample_block(ln_z: f64) -> u64 {
    let mut m = 1u64;
    let mut upper = (2f64).ln();
    while ln_z >= upper {
        m += 1;
        upper += ((m + 1) as f64).ln();
    }
    m
}

/// `ln Z` for `Z` standard Pareto(alpha) restricted to `[e^{ln_a}, e^{ln_b})`.
pub fn pareto_in_block<R: Rng + ?Sized>(alpha: f64, ln_a: f64, ln_b: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    // mass of the block relative to its lower end: 1 - (a/b)^alpha
    let frac = -(-alpha * (ln_b - ln_a)).exp_m1();
    ln_a - (-u * frac).ln_1p() / alpha
}

fn block_bounds(m: u64) -> (f64, f64) {
    let lo = ln_factorial(m);
    (lo, lo + ((m + 1) as f64).ln())
}

/// Second coordinate given the first equals `z`.
pub fn partner_given<R: Rng + ?Sized>(z: f64, alpha: f64, rng: &mut R) -> f64 {
    let m = counterexample_block(z.ln());
    if m % 2 == 1 {
        z
    } else {
        let (a, b) = block_bounds(m);
        pareto_in_block(alpha, a, b, rng).exp()
    }
}

pub fn sample_pair_with<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> (f64, f64) {
    let e: f64 = rng.sample(Open01);
    let ln_z = -e.ln() / alpha;
    let m = counterexample_block(ln_z);
    if m % 2 == 1 {
        let z = ln_z.exp();
        (z, z)
    } else {
        let (a, b) = block_bounds(m);
        (
            pareto_in_block(alpha, a, b, rng).exp(),
            pareto_in_block(alpha, a, b, rng).exp(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn blocks() {
        assert_eq!(counterexample_block(0.0), 1);
        assert_eq!(counterexample_block(1.99f64.ln()), 1);
        assert_eq!(counterexample_block(2f64.ln()), 2);
        assert_eq!(counterexample_block(5.9f64.ln()), 2);
        assert_eq!(counterexample_block(6f64.ln() + 1e-12), 3);
        assert_eq!(counterexample_block(ln_factorial(40) + 1e-9), 40);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn block_draws_stay_inside() {
        let mut r = RngStream::new(1).rng();
        for m in [2u64, 10, 30, 200] {
            let (a, b) = block_bounds(m);
            for _ in 0..1000 {
                let x = pareto_in_block(1.5, a, b, &mut r);
                assert!(x >= a && x < b);
            }
        }
    }
}
