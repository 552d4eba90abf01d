//! Oracle computations shared by the oracle and acceptance test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcs_core::critic::{CriticEncoding, CriticView};
use vcs_core::envs::{grid_dataset, Cell, GridAction, StitchGrid};
use vcs_core::iql::{expectile_loss, expectile_weight};
use vcs_core::nn::{NetSpec, Network};
use vcs_core::ntk::{normalized_ntk, ntk, omrr, ActionQuantizer};
use vcs_core::policy::PolicySpec;
use vcs_core::{Dataset, RunConfig, Scalar};

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Every network layout the presets build: critics, value nets, policies.
pub fn repo_shapes() -> Vec<(String, NetSpec)> {
    let mut out = Vec::new();
    for env in vcs_core::envs::ENV_IDS {
        let cfg = RunConfig::preset(env).unwrap();
        let e = vcs_core::make_env(env).unwrap();
        let (sd, ad) = (e.state_dim(), e.action_dim());
        let critic_in = cfg.iql.encoding.input_dim(sd, ad);
        out.push((
            format!("{env} critic"),
            NetSpec::mlp(critic_in, &cfg.iql.hidden, 1).unwrap(),
        ));
        out.push((
            format!("{env} value"),
            NetSpec::mlp(sd, &cfg.iql.hidden, 1).unwrap(),
        ));
        for context in [1, 3] {
            let spec = PolicySpec {
                context,
                mode: cfg.policy.mode,
                hidden: cfg.policy.hidden.clone(),
                head: cfg.policy.head,
                state_dim: sd,
                action_dim: ad,
                rtg_scale: cfg.policy.rtg_scale,
            };
            out.push((
                format!("{env} policy K={context}"),
                spec.net_spec().unwrap(),
            ));
        }
    }
    out
}

/// Scalar probe `c . f(x)` so multi-output nets reduce to one number.
pub fn probe(net: &Network<f64>, x: &[f64], c: &[f64]) -> f64 {
    net.predict(x)
        .unwrap()
        .iter()
        .zip(c)
        .map(|(y, c)| y * c)
        .sum()
}

/// Worst relative error between backward and central differences, per
/// repo shape, over 100 random points each.
pub fn finite_difference_errors() -> Vec<(String, f64)> {
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out = Vec::new();
    for (name, spec) in repo_shapes() {
        let n_params = spec.num_params();
        let full = n_params <= 2_000;
        let mut worst = 0.0f64;
        for point in 0..100 {
            let mut net = Network::<f64>::init(spec.clone(), point);
            for v in &mut net.params.values {
                *v += rng.random_range(-0.1..0.1);
            }
            let x = random_vec(&mut rng, spec.input_dim(), 1.0);
            let c = random_vec(&mut rng, spec.output_dim(), 1.0);
            let (_, cache) = net.forward(&x).unwrap();
            let g = net.backward(&cache, &c).unwrap();
            for i in 0..x.len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += h;
                xm[i] -= h;
                let fd = (probe(&net, &xp, &c) - probe(&net, &xm, &c)) / (2.0 * h);
                worst = worst.max(rel_err(fd, g.wrt_input[i]));
            }
            let coords: Vec<usize> = if full {
                (0..n_params).collect()
            } else {
                (0..64).map(|_| rng.random_range(0..n_params)).collect()
            };
            let mut shifted = net.clone();
            for j in coords {
                let v = net.params.values[j];
                shifted.params.values[j] = v + h;
                let fp = probe(&shifted, &x, &c);
                shifted.params.values[j] = v - h;
                let fm = probe(&shifted, &x, &c);
                shifted.params.values[j] = v;
                worst = worst.max(rel_err((fp - fm) / (2.0 * h), g.wrt_params[j]));
            }
            for _ in 0..8 {
                let dir = random_vec(&mut rng, n_params, 1.0);
                let along = |t: f64| {
                    let mut n = net.clone();
                    for (p, d) in n.params.values.iter_mut().zip(&dir) {
                        *p += t * d;
                    }
                    probe(&n, &x, &c)
                };
                let fd = (along(h) - along(-h)) / (2.0 * h);
                let an: f64 = g.wrt_params.iter().zip(&dir).map(|(a, b)| a * b).sum();
                worst = worst.max(rel_err(fd, an));
            }
        }
        out.push((name, worst));
    }
    out
}

/// Value iteration over an independently written copy of the grid table.
pub fn grid_value_iteration() -> BTreeMap<(&'static str, &'static str), f64> {
    let table: [(&str, &str, &str, f64); 6] = [
        ("s1", "UP", "s2", 3.0),
        ("s1", "RIGHT", "s3", 1.0),
        ("s2", "RIGHT", "TERM", 4.0),
        ("s2", "DOWNRIGHT", "s6", 1.0),
        ("s3", "UPLEFT", "s2", 1.0),
        ("s6", "RIGHT", "TERM", 1.0),
    ];
    let states = ["s1", "s2", "s3", "s6", "TERM"];
    let mut v: BTreeMap<&str, f64> = states.iter().map(|&s| (s, 0.0)).collect();
    let mut q = BTreeMap::new();
    for _ in 0..10 {
        for &(s, a, s2, r) in &table {
            q.insert((s, a), r + v[s2]);
        }
        for &s in &states {
            let best = table
                .iter()
                .filter(|t| t.0 == s)
                .map(|t| q[&(t.0, t.1)])
                .fold(0.0f64, |m, x| if m == 0.0 { x } else { m.max(x) });
            v.insert(s, best);
        }
    }
    q
}

/// Largest gap between the exact grid table and value iteration.
pub fn grid_table_error() -> f64 {
    let oracle = grid_value_iteration();
    let exact = &StitchGrid::q_table()[0];
    assert_eq!(exact.len(), oracle.len());
    exact
        .iter()
        .map(|((cell, action), q)| {
            let key = (cell.to_string(), action.to_string());
            let want = oracle
                .iter()
                .find(|((s, a), _)| *s == key.0 && *a == key.1)
                .map(|(_, &v)| v)
                .unwrap_or_else(|| panic!("{key:?} missing from oracle"));
            (q - want).abs()
        })
        .fold(0.0, f64::max)
}

/// Minimizes the mean expectile loss of `{0, 1}` over the location `tau`
/// by golden-section search and by gradient descent.
pub fn fitted_expectile(eta: f64) -> (f64, f64) {
    let sample = [0.0, 1.0];
    let objective = |tau: f64| {
        sample
            .iter()
            .map(|&x| expectile_loss(x - tau, eta))
            .sum::<f64>()
            / 2.0
    };
    let (mut lo, mut hi) = (-1.0f64, 2.0f64);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if objective(m1) < objective(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let golden = 0.5 * (lo + hi);
    let mut tau = 0.0;
    for _ in 0..20_000 {
        let grad: f64 = sample
            .iter()
            .map(|&x| -2.0 * expectile_weight(x - tau, eta) * (x - tau))
            .sum::<f64>()
            / 2.0;
        tau -= 0.05 * grad;
    }
    (golden, tau)
}

pub fn random_critic(
    hidden: &[usize],
    encoding: CriticEncoding,
    sd: usize,
    ad: usize,
    seed: u64,
) -> Network<f64> {
    let spec = NetSpec::mlp(encoding.input_dim(sd, ad), hidden, 1).unwrap();
    let mut net = Network::<f64>::init(spec, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for v in &mut net.params.values {
        *v += rng.random_range(-0.2..0.2);
    }
    net
}

pub fn view(
    net: &Network<f64>,
    encoding: CriticEncoding,
    action_dim: usize,
) -> CriticView<'_, f64> {
    CriticView {
        net,
        encoding,
        action_dim,
    }
}

/// `(worst relative asymmetry, every self-normalized value is exactly 1)`.
pub fn kernel_symmetry<T: Scalar>() -> (f64, bool) {
    let net64 = random_critic(&[16, 16], CriticEncoding::Concat, 2, 2, 3);
    let net = Network::<T> {
        spec: net64.spec.clone(),
        params: net64.params.cast(),
    };
    let view = CriticView {
        net: &net,
        encoding: CriticEncoding::Concat,
        action_dim: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut unit = true;
    for _ in 0..50 {
        let v: Vec<T> = random_vec(&mut rng, 8, 1.0)
            .into_iter()
            .map(T::of)
            .collect();
        let (s1, a1, s2, a2) = (&v[0..2], &v[2..4], &v[4..6], &v[6..8]);
        let k12 = ntk(&view, s1, a1, s2, a2).unwrap();
        let k21 = ntk(&view, s2, a2, s1, a1).unwrap();
        worst = worst.max((k12 - k21).abs().to_f64_lossy() / k12.abs().to_f64_lossy().max(1.0));
        unit &= normalized_ntk(&view, s1, a1, s1, a1).unwrap() == T::one();
    }
    (worst, unit)
}

/// Worst relative gap between a linear critic's kernel and `[s; a; 1]`
/// inner products.
pub fn linear_kernel_error() -> f64 {
    let net = random_critic(&[], CriticEncoding::Concat, 3, 2, 9);
    let view = view(&net, CriticEncoding::Concat, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = random_vec(&mut rng, 10, 2.0);
        let (s1, a1, s2, a2) = (&x[0..3], &x[3..5], &x[5..8], &x[8..10]);
        let phi = |s: &[f64], a: &[f64]| -> Vec<f64> {
            s.iter().chain(a).copied().chain([1.0]).collect()
        };
        let want: f64 = phi(s1, a1)
            .iter()
            .zip(phi(s2, a2))
            .map(|(p, q)| p * q)
            .sum();
        let got = ntk(&view, s1, a1, s2, a2).unwrap();
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
    }
    worst
}

pub fn grid_pairs() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    (
        Cell::ALL.iter().map(|c| c.one_hot()).collect(),
        GridAction::ALL.iter().map(|a| a.one_hot()).collect(),
    )
}

pub fn grad(view: &CriticView<'_, f64>, s: &[f64], a: &[f64]) -> Vec<f64> {
    view.param_gradient(s, a).unwrap().1
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn exhaustive_omrr(view: &CriticView<'_, f64>, ds: &Dataset, q: &ActionQuantizer) -> f64 {
    let grid = q.points();
    let mut total = 0.0;
    let mut n = 0;
    for (s, a) in ds.state_actions() {
        let g = grad(view, s, a);
        let norm2 = dot(&g, &g);
        let own = q.nearest(a);
        let mut row = 0.0;
        for (j, a_bar) in grid.iter().enumerate() {
            if j != own {
                row += dot(&grad(view, s, a_bar), &g).abs() / norm2;
            }
        }
        total += row / (grid.len() - 1) as f64;
        n += 1;
    }
    total / n as f64
}

pub fn grid_quantizer() -> ActionQuantizer {
    ActionQuantizer::Discrete {
        actions: GridAction::ALL.iter().map(|a| a.one_hot()).collect(),
    }
}

/// Gap between sampled-without-replacement OMRR over every grid pair and
/// the explicit double sum, for three critic shapes.
pub fn grid_omrr_errors() -> Vec<f64> {
    let ds = grid_dataset();
    let q = grid_quantizer();
    [
        (vec![], CriticEncoding::StateOuterAction),
        (vec![8], CriticEncoding::StateOuterAction),
        (vec![8, 8], CriticEncoding::Concat),
    ]
    .into_iter()
    .map(|(hidden, encoding)| {
        let net = random_critic(&hidden, encoding, 5, 4, 17);
        let view = view(&net, encoding, 4);
        let report = omrr(&view, &ds, &q, ds.num_transitions(), 0).unwrap();
        assert_eq!(report.n_pairs, ds.num_transitions());
        (report.estimate - exhaustive_omrr(&view, &ds, &q)).abs()
    })
    .collect()
}
