//! Closed-form indices of the diagonal max-moving average against a
//! single-big-jump oracle written from the field definition.

use num_rational::Ratio;
use proptest::prelude::*;
use spatial_extremes::index::{exact_to_f64, mixture_theta, mma_theta_closed_form, Exact, ThetaTarget};
use spatial_extremes::lattice::CornerIndex;
use spatial_extremes::model::{MmaWeights, MMA_OFFSETS};

fn tenths(v: i64) -> Exact {
    Ratio::new(v as i128, 10)
}

/// `X(t) = max_j a_j Z(t + j)` with `a_0 = 1`. Given `X(0) > u` the jump
/// sits at `Z(j)` with probability `a_j / sum a`, and it is the only
/// exceedance in the orthant away from the corner with probability
/// `(1 - max a_{j'} / a_j)^+` over the other sites `j - j'` it reaches.
fn oracle_corner(a: [i64; 4], corner: [u8; 2]) -> Exact {
    let mut stencil: Vec<([i64; 2], Exact)> = vec![([0, 0], tenths(10))];
    for (o, w) in MMA_OFFSETS.iter().zip(a) {
        stencil.push((*o, tenths(w)));
    }
    let inside = |t: [i64; 2]| {
        t != [0, 0]
            && (0..2).all(|l| {
                let sign = if corner[l] == 1 { -1 } else { 1 };
                t[l] * sign >= 0
            })
    };
    let total: Exact = stencil.iter().map(|(_, w)| *w).sum();
    let zero = Exact::from_integer(0);
    let mut alone = zero;
    for (j, aj) in &stencil {
        let mut reach = zero;
        for (jp, ajp) in &stencil {
            if inside([j[0] - jp[0], j[1] - jp[1]]) && *ajp > reach {
                reach = *ajp;
            }
        }
        if *aj > reach {
            alone += *aj - reach;
        }
    }
    alone / total
}

fn weights(a: [i64; 4]) -> MmaWeights {
    MmaWeights::new(a.map(|v| v as f64 / 10.0)).unwrap()
}

fn corner(bits: [u8; 2]) -> CornerIndex {
    CornerIndex::new(bits.to_vec()).unwrap()
}

#[test]
fn example_table_is_exact() {
    let a = weights([1, 7, 6, 1]);
    let cl = mma_theta_closed_form(&a, &ThetaTarget::Classical).unwrap();
    assert_eq!(cl, Ratio::new(2, 5));
    let want = [([0, 0], (16, 25)), ([1, 1], (11, 25)), ([0, 1], (2, 5)), ([1, 0], (3, 5))];
    for (c, (p, q)) in want {
        let v = mma_theta_closed_form(&a, &ThetaTarget::Corner(corner(c))).unwrap();
        assert_eq!(v, Ratio::new(p, q), "corner {c:?}");
        assert_eq!(v, oracle_corner([1, 7, 6, 1], c));
    }
    assert_eq!(exact_to_f64(&Ratio::new(16, 25)), 0.64);
}

#[test]
fn mixture_table_is_exact() {
    let m = mixture_theta(&[(0.5, weights([1, 7, 6, 1])), (0.5, weights([6, 2, 6, 1]))]).unwrap();
    assert_eq!(m.classical, Ratio::new(2, 5));
    let want = [([0, 0], (13, 25)), ([0, 1], (14, 25)), ([1, 0], (7, 10)), ([1, 1], (21, 50))];
    for (c, (p, q)) in want {
        let got = m.corners.iter().find(|(k, _)| *k == corner(c)).unwrap().1;
        assert_eq!(got, Ratio::new(p, q), "corner {c:?}");
        let avg = (oracle_corner([1, 7, 6, 1], c) + oracle_corner([6, 2, 6, 1], c)) / Ratio::from_integer(2);
        assert_eq!(got, avg);
    }
}

#[test]
fn mixture_rules() {
    let a = weights([1, 7, 6, 1]);
    let single = mixture_theta(&[(1.0, a)]).unwrap();
    let twice = mixture_theta(&[(0.3, a), (0.7, a)]).unwrap();
    assert_eq!(single, twice);
    // different s
    assert!(mixture_theta(&[(0.5, a), (0.5, weights([1, 1, 1, 1]))]).is_err());
    assert!(mixture_theta(&[(0.5, a), (0.6, a)]).is_err());
}

#[test]
fn bad_weights_are_rejected() {
    assert!(MmaWeights::new([1.3, 0.7, 0.6, 0.1]).is_err());
    assert!(MmaWeights::new([-0.1, 0.7, 0.6, 0.1]).is_err());
    assert!(MmaWeights::new([f64::NAN, 0.7, 0.6, 0.1]).is_err());
}

proptest! {
    #[test]
    fn closed_form_matches_oracle(a in prop::array::uniform4(0i64..=10)) {
        let w = weights(a);
        let s: i64 = a.iter().sum();
        prop_assert_eq!(
            mma_theta_closed_form(&w, &ThetaTarget::Classical).unwrap(),
            Ratio::new(10, 10 + s as i128)
        );
        for bits in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            let v = mma_theta_closed_form(&w, &ThetaTarget::Corner(corner(bits))).unwrap();
            prop_assert_eq!(v, oracle_corner(a, bits));
            prop_assert!(v >= Ratio::from_integer(0) && v <= Ratio::from_integer(1));
        }
    }
}
