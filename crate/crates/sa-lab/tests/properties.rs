//! Property-based checks of the Poisson solver and the CLT covariance on
//! randomly generated ergodic chains.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sa_lab::markov::{FiniteMarkovChain, StateVectorTable};

/// Random ergodic chain: raw positive rows, normalized, then mixed halfway
/// toward uniform so the spectral gap is bounded below (|lambda_2| <= 1/2).
fn chain_strategy() -> impl Strategy<Value = FiniteMarkovChain> {
    (2usize..=8)
        .prop_flat_map(|n| {
            proptest::collection::vec(0.05f64..1.0, n * n).prop_map(move |raw| (n, raw))
        })
        .prop_map(|(n, raw)| {
            let mut p = DMatrix::zeros(n, n);
            for i in 0..n {
                let row = &raw[i * n..(i + 1) * n];
                let sum: f64 = row.iter().sum();
                for j in 0..n {
                    p[(i, j)] = 0.5 * row[j] / sum + 0.5 / n as f64;
                }
            }
            FiniteMarkovChain::new(p).expect("mixed rows are ergodic")
        })
}

fn table_strategy(n: usize) -> impl Strategy<Value = StateVectorTable> {
    (1usize..=4).prop_flat_map(move |d| {
        proptest::collection::vec(-5.0f64..5.0, n * d).prop_map(move |vals| {
            let vecs = (0..n)
                .map(|x| DVector::from_row_slice(&vals[x * d..(x + 1) * d]))
                .collect();
            StateVectorTable::new(vecs).unwrap()
        })
    })
}

/// Truncated autocovariance sum sum_{|k| <= lag} E_pi[g~(Phi_0) g~(Phi_k)^T]
/// with lag chosen so |lambda_2|^lag < 1e-12.
fn truncated_autocovariance(chain: &FiniteMarkovChain, g: &StateVectorTable) -> DMatrix<f64> {
    let pi = chain.stationary();
    let p = chain.transition_matrix();
    let mean = g.pi_mean(chain);
    let n = chain.n_states();
    let d = g.dim();
    let l2 = chain.lambda2_modulus().min(0.999);
    let lag = if l2 <= 0.0 {
        1
    } else {
        ((1e-12f64).ln() / l2.ln()).ceil() as usize + 1
    };

    let mut sigma = DMatrix::<f64>::zeros(d, d);
    for x in 0..n {
        let gx = g.get(x) - &mean;
        sigma += pi[x] * &gx * gx.transpose();
    }
    let mut pk = DMatrix::<f64>::identity(n, n);
    for _ in 1..=lag {
        pk = &pk * p;
        let mut ck = DMatrix::<f64>::zeros(d, d);
        for x in 0..n {
            let gx = g.get(x) - &mean;
            for y in 0..n {
                let gy = g.get(y) - &mean;
                ck += pi[x] * pk[(x, y)] * &gx * gy.transpose();
            }
        }
        sigma += &ck + ck.transpose();
    }
    sigma
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, ..ProptestConfig::default() })]

    #[test]
    fn poisson_solution_is_exact_and_zero_mean(
        (chain, g) in chain_strategy().prop_flat_map(|c| {
            let n = c.n_states();
            (Just(c), table_strategy(n))
        })
    ) {
        let g_hat = chain.poisson_solve_vector(&g).unwrap();
        let pi = chain.stationary();
        let p = chain.transition_matrix();
        let mean = g.pi_mean(&chain);
        let n = chain.n_states();
        let d = g.dim();

        // pi(g_hat) = 0.
        let mut pig = DVector::<f64>::zeros(d);
        for x in 0..n {
            pig.axpy(pi[x], g_hat.get(x), 1.0);
        }
        prop_assert!(pig.amax() < 1e-10);

        // (P g_hat)(x) = g_hat(x) - g(x) + pi(g) at every state.
        for x in 0..n {
            let mut lhs = DVector::<f64>::zeros(d);
            for z in 0..n {
                lhs.axpy(p[(x, z)], g_hat.get(z), 1.0);
            }
            let rhs = g_hat.get(x) - g.get(x) + &mean;
            prop_assert!((lhs - rhs).amax() < 1e-10);
        }
    }

    #[test]
    fn clt_covariance_equals_truncated_autocovariance(
        (chain, g) in chain_strategy().prop_flat_map(|c| {
            let n = c.n_states();
            (Just(c), table_strategy(n))
        })
    ) {
        let direct = chain.clt_covariance(&g).unwrap();
        let truncated = truncated_autocovariance(&chain, &g);
        let scale = 1.0 + direct.amax();
        prop_assert!(
            (&direct - &truncated).amax() < 1e-8 * scale,
            "gap = {}",
            (&direct - &truncated).amax()
        );
        // Symmetric PSD.
        prop_assert!((&direct - direct.transpose()).amax() < 1e-10 * scale);
        let eig = nalgebra::SymmetricEigen::new(direct.clone());
        prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-8 * scale));
    }
}
