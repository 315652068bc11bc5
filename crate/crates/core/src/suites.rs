//! Experiment suites behind the command-line subcommands.
//!
//! Every suite is a pure function of an [`ExperimentConfig`]: it runs its
//! ensembles, returns CSV tables and the pass/fail outcome of each
//! acceptance check it owns. Checks numbered `1`–`10` are the acceptance
//! criteria; `aux-*` checks are supporting invariants.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::ExperimentConfig;
use crate::control::{
    hjb_residual, lq_reference, terminal_residual, uniform_in_ball, verification_gap,
    FeedbackPolicy, VerificationReport,
};
use crate::ensemble::{mean, median, std_dev, EnsembleSpec, Summary};
use crate::error::{Error, Result};
use crate::noise::{sample_q_wiener, GridPath, SeedSpec, StreamPurpose, TimeGrid};
use crate::regularization::{
    forward_integral, ito_sum, ladder_study, scalar_qv, summarize_ladder, tensor_qv,
    ConvergenceReport, OperatorPath, StudySample, VerdictRule,
};
use crate::report::{fmt_f64, CriterionResult, SuiteOutput, Table};
use crate::spaces::{
    dot, norm, trace_pairing, ChiFunctional, HVector, TensorElement, TruncatedSpace,
};
use crate::spde::{
    dirichlet_remainder, ito_residual, ondrejat_residual, simulate_mild, y_process,
    zero_chi_qv_certificate, Diffusion, Drift, SPDEModel, TestFunction, TestKind, TestMartingale,
};

pub const SUITES: [&str; 6] = [
    "norms-selftest",
    "integrals",
    "qv",
    "mild",
    "ito-check",
    "control",
];

pub fn run_suite(name: &str, cfg: &ExperimentConfig) -> Option<Result<SuiteOutput>> {
    let out = match name {
        "norms-selftest" => norms_selftest(cfg),
        "integrals" => integrals(cfg),
        "qv" => qv(cfg),
        "mild" => mild(cfg),
        "ito-check" => ito_check(cfg),
        "control" => control(cfg),
        _ => return None,
    };
    Some(out)
}

fn ensemble(cfg: &ExperimentConfig) -> EnsembleSpec {
    EnsembleSpec::new(cfg.n_paths, cfg.master_seed).with_execution(cfg.execution)
}

fn seed_label(cfg: &ExperimentConfig, path: u64) -> String {
    format!("{}:{}", cfg.master_seed, path)
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

/// `v[i+1] / v[i]`.
pub fn successive_ratios(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] / w[0]).collect()
}

/// Per-halving factor `2^{−r}` from a least-squares fit `v ∝ dt^r`.
pub fn regression_factor(dts: &[f64], values: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.log2()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.log2()).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    0.5f64.powf(sxy / sxx)
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(" "))
}

fn fmt_sci_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(" "))
}

fn ladder_table(name: &str, reports: &[ConvergenceReport]) -> Table {
    let mut t = Table::new(name, &ConvergenceReport::CSV_HEADER);
    for r in reports {
        r.csv_rows().into_iter().for_each(|row| t.push(row));
    }
    t
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn gaussian_tensor(rng: &mut ChaCha8Rng, n: usize) -> TensorElement {
    TensorElement::from_row_major(n, &gaussian(rng, n * n)).expect("square")
}

/// Default heat model of the configuration.
pub fn heat_model(cfg: &ExperimentConfig, n: usize) -> Result<SPDEModel> {
    Ok(SPDEModel::heat(cfg.space_with(n)?))
}

/// The four-rung dt ladder `{4dt, 2dt, dt, dt/2}` sharing one fine noise grid.
fn dt_ladder(cfg: &ExperimentConfig) -> Result<(TimeGrid, [usize; 4])> {
    let fine = TimeGrid::new(cfg.t_start, cfg.t_end, 2 * cfg.n_steps)?;
    let factors = [8, 4, 2, 1];
    for f in factors {
        fine.coarsen(f)?;
    }
    Ok((fine, factors))
}

/// `M(t) = Σ_{t_i < t} ψ(t_i, k) ΔW_{i,k}` for a deterministic diagonal integrand.
pub fn diagonal_wiener_integral(w: &GridPath, psi: impl Fn(f64, usize) -> f64) -> GridPath {
    let grid = *w.grid();
    let n = w.dim();
    let mut out = GridPath::zeros(grid, n);
    for i in 0..grid.n_steps() {
        let t = grid.time(i);
        let (prev, inc): (Vec<f64>, Vec<f64>) = (
            out.at(i).to_vec(),
            (0..n)
                .map(|k| psi(t, k) * (w.at(i + 1)[k] - w.at(i)[k]))
                .collect(),
        );
        out.at_mut(i + 1)
            .iter_mut()
            .enumerate()
            .for_each(|(k, o)| *o = prev[k] + inc[k]);
    }
    out
}

/// `V(t) = Σ_{t_i < t} W(t_i) dt`, a continuous bounded-variation path.
pub fn running_integral(w: &GridPath) -> GridPath {
    let grid = *w.grid();
    let dt = grid.dt();
    let mut out = GridPath::zeros(grid, w.dim());
    for i in 0..grid.n_steps() {
        let next: Vec<f64> = out
            .at(i)
            .iter()
            .zip(w.at(i))
            .map(|(v, w)| v + w * dt)
            .collect();
        out.at_mut(i + 1).copy_from_slice(&next);
    }
    out
}

/// `(e^{a x} − 1) / a`, continuous at `a = 0`.
pub fn exp_integral(a: f64, x: f64) -> f64 {
    if a == 0.0 {
        x
    } else {
        (a * x).exp_m1() / a
    }
}

/// Root-mean-square of `e^{λ(u + r)}` over `r ∈ [0, dt]`: scaling a Wiener
/// increment by it gives the exact law of the convolution increment.
pub fn convolution_cell_scale(lambda: f64, u: f64, dt: f64) -> f64 {
    ((2.0 * lambda * u).exp() * exp_integral(2.0 * lambda, dt) / dt).sqrt()
}

/// Time profile of the modulated Wiener integral used by the tensor-QV check.
pub fn modulation(cfg: &ExperimentConfig, t: f64) -> f64 {
    1.0 + 0.5 * (std::f64::consts::PI * (t - cfg.t_start) / (cfg.t_end - cfg.t_start)).cos()
}

// ---------------------------------------------------------------- norms

pub fn norms_selftest(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let mut table = Table::new(
        "norms",
        &[
            "check",
            "n_modes",
            "n_samples",
            "max_error",
            "tolerance",
            "passed",
        ],
    );
    let push =
        |table: &mut Table, check: &str, n: usize, samples: usize, err: f64, tol: f64| -> bool {
            let ok = err <= tol;
            table.push(vec![
                check.into(),
                n.to_string(),
                samples.to_string(),
                fmt_f64(err),
                fmt_f64(tol),
                ok.to_string(),
            ]);
            ok
        };
    let samples = 1000;
    let (mut sandwich_ok, mut pairing_ok, mut aux_ok) = (true, true, true);
    let mut worst_pairing: f64 = 0.0;
    for n in [2usize, 4, 8] {
        let mut rng = SeedSpec::new(cfg.master_seed, n as u64, StreamPurpose::Auxiliary(20)).rng(0);
        // injective ≤ Hilbert–Schmidt ≤ projective
        let mut violation: f64 = 0.0;
        for _ in 0..samples {
            let u = gaussian_tensor(&mut rng, n);
            let (inj, hs, proj) = (u.injective_norm(), u.coeffs().norm(), u.projective_norm());
            violation = violation.max((inj - hs).max(hs - proj).max(0.0) / proj);
        }
        sandwich_ok &= push(
            &mut table,
            "injective<=hilbert_schmidt<=projective",
            n,
            samples,
            violation,
            1e-12,
        );
        let mut rank_one: f64 = 0.0;
        for _ in 0..samples {
            let (x, y) = (gaussian(&mut rng, n), gaussian(&mut rng, n));
            let u = TensorElement::rank_one(&x, &y)?;
            let exact = norm(&x) * norm(&y);
            rank_one = rank_one
                .max((u.projective_norm() - exact).abs() / exact)
                .max((u.injective_norm() - exact).abs() / exact);
        }
        sandwich_ok &= push(
            &mut table,
            "rank_one_projective=injective=|x||y|",
            n,
            samples,
            rank_one,
            1e-10,
        );
        // trace pairing against Σ σ_i ψ(a_i, b_i) from the singular value decomposition of u
        let mut pairing: f64 = 0.0;
        for _ in 0..samples {
            let psi = gaussian_tensor(&mut rng, n);
            let u = gaussian_tensor(&mut rng, n);
            let svd = u.coeffs().clone().svd(true, true);
            let (a, b) = (svd.u.as_ref().expect("u"), svd.v_t.as_ref().expect("v_t"));
            let oracle: f64 = (0..n)
                .map(|i| {
                    let ai = a.column(i);
                    let bi = b.row(i).transpose();
                    svd.singular_values[i] * (ai.transpose() * psi.coeffs() * bi)[(0, 0)]
                })
                .sum();
            let scale = psi.coeffs().norm() * u.coeffs().norm();
            pairing = pairing.max((trace_pairing(&psi, &u)? - oracle).abs() / scale);
        }
        worst_pairing = worst_pairing.max(pairing);
        pairing_ok &= push(
            &mut table,
            "trace_pairing=svd_oracle",
            n,
            samples,
            pairing,
            1e-10,
        );
    }

    // invariants of the configured space
    let space = cfg.space()?;
    let n = space.n_modes();
    let mut rng = SeedSpec::new(cfg.master_seed, 0, StreamPurpose::Auxiliary(21)).rng(0);
    let (mut duality, mut chi, mut semigroup): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let c = space.chi_embedding_constant();
    for _ in 0..samples {
        let (x, z) = (gaussian(&mut rng, n), gaussian(&mut rng, n));
        let bound = space.dual_graph_norm(&x)? * space.graph_norm(&z)?;
        duality = duality.max((dot(&x, &z).abs() - bound).max(0.0) / bound);
        let u = gaussian_tensor(&mut rng, n);
        let p = u.projective_norm();
        chi = chi.max((space.chi_dual_norm(&u)? - c * p).max(0.0) / p);
        let (s, t) = (rng.random::<f64>(), rng.random::<f64>());
        let lhs = space.semigroup_apply(s + t, &x)?;
        let rhs = space.semigroup_apply(s, &space.semigroup_apply(t, &x)?)?;
        semigroup = semigroup.max(
            norm(
                &lhs.iter()
                    .zip(rhs.iter())
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            ) / norm(&x),
        );
    }
    aux_ok &= push(
        &mut table,
        "|<x,z>|<=dual(x)*graph(z)",
        n,
        samples,
        duality,
        1e-12,
    );
    aux_ok &= push(&mut table, "chi_dual<=C*projective", n, samples, chi, 1e-12);
    aux_ok &= push(&mut table, "semigroup_law", n, samples, semigroup, 1e-12);

    Ok(SuiteOutput {
        tables: vec![table],
        criteria: vec![
            CriterionResult::new(
                "1",
                "tensor-norm sandwich and rank-one equality",
                sandwich_ok,
                format!("{samples} tensors per N in {{2,4,8}}"),
            ),
            CriterionResult::new(
                "2",
                "trace pairing matches the singular-value decomposition oracle",
                pairing_ok,
                format!("max relative error {worst_pairing:.2e} over {samples} pairs per N"),
            ),
            CriterionResult::new(
                "aux-spaces",
                "duality, χ-embedding and semigroup invariants",
                aux_ok,
                "see norms.csv",
            ),
        ],
    })
}

// ---------------------------------------------------------------- integrals

const INTEGRANDS: [&str; 4] = [
    "constant",
    "wiener_state",
    "sin_state",
    "semigroup_operator",
];
const INTEGRATORS: [&str; 3] = ["wiener", "horizon_martingale", "bounded_variation"];

fn integrand(space: &TruncatedSpace, name: &str, w: &GridPath) -> OperatorPath {
    let grid = *w.grid();
    let n = space.n_modes();
    let lambda = space.eigenvalues().to_vec();
    let h: Vec<f64> = (1..=n).map(|k| 1.0 / k as f64).collect();
    match name {
        "constant" => OperatorPath::constant(grid, 1, n, &h).expect("matching size"),
        "wiener_state" => {
            OperatorPath::from_fn(grid, 1, n, |i, _, out| out.copy_from_slice(w.at(i)))
        }
        "sin_state" => OperatorPath::from_fn(grid, 1, n, |i, _, out| {
            out.iter_mut().zip(w.at(i)).for_each(|(o, v)| *o = v.sin())
        }),
        // e^{(T−t)A} + W(t) ⊗ h
        _ => OperatorPath::from_fn(grid, n, n, |i, t, out| {
            let wi = w.at(i);
            for r in 0..n {
                for c in 0..n {
                    out[r * n + c] = 0.1 * wi[r] * h[c];
                }
                out[r * n + r] += (lambda[r] * (grid.t_end() - t)).exp();
            }
        }),
    }
}

fn integrator(space: &TruncatedSpace, name: &str, w: &GridPath) -> GridPath {
    let lambda = space.eigenvalues().to_vec();
    let t_end = w.grid().t_end();
    match name {
        "wiener" => w.clone(),
        "horizon_martingale" => diagonal_wiener_integral(w, |t, k| (lambda[k] * (t_end - t)).exp()),
        _ => running_integral(w),
    }
}

pub fn integrals(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let space = cfg.space()?;
    let grid = cfg.grid()?;
    let ladder = cfg.ladder()?;
    let ens = ensemble(cfg);
    let multiples = ladder.multiples().to_vec();
    let dt = grid.dt();
    // per path: for each (integrator, integrand) the discrepancy per rung and |Itô integral|
    let per_path: Vec<Vec<(Vec<f64>, f64)>> = ens
        .map(|path| -> Result<Vec<(Vec<f64>, f64)>> {
            let w = sample_q_wiener(&space, &grid, ens.seed(path, StreamPurpose::QWiener));
            let mut out = Vec::with_capacity(INTEGRATORS.len() * INTEGRANDS.len());
            for name_y in INTEGRATORS {
                let y = integrator(&space, name_y, &w);
                for name_x in INTEGRANDS {
                    let x = integrand(&space, name_x, &w);
                    let ito = ito_sum(&x, &y)?;
                    let ito_t = ito.last().to_vec();
                    let discs = multiples
                        .iter()
                        .map(|&p| {
                            let f = forward_integral(&x, &y, p as f64 * dt)?;
                            Ok(norm(
                                &f.last()
                                    .iter()
                                    .zip(&ito_t)
                                    .map(|(a, b)| a - b)
                                    .collect::<Vec<_>>(),
                            ))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    out.push((discs, norm(&ito_t)));
                }
            }
            Ok(out)
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let mut table = Table::new(
        "integrals",
        &[
            "integrator",
            "integrand",
            "epsilon",
            "q05",
            "q50",
            "q95",
            "integral_scale",
            "n_paths",
        ],
    );
    let mut ok = true;
    let mut failures = Vec::new();
    let mut combo = 0;
    for name_y in INTEGRATORS {
        for name_x in INTEGRANDS {
            let scale = median(&per_path.iter().map(|p| p[combo].1).collect::<Vec<_>>());
            let mut medians = Vec::new();
            for (r, &p) in multiples.iter().enumerate() {
                let s = Summary::of(&per_path.iter().map(|pp| pp[combo].0[r]).collect::<Vec<_>>());
                medians.push(s.q50);
                table.push(vec![
                    name_y.into(),
                    name_x.into(),
                    fmt_f64(p as f64 * dt),
                    fmt_f64(s.q05),
                    fmt_f64(s.q50),
                    fmt_f64(s.q95),
                    fmt_f64(scale),
                    cfg.n_paths.to_string(),
                ]);
            }
            let last = *medians.last().expect("non-empty ladder");
            let pass = strictly_decreasing(&medians) && last <= 0.01 * scale;
            if !pass {
                failures.push(format!(
                    "{name_y}/{name_x} medians {}",
                    fmt_sci_list(&medians)
                ));
            }
            ok &= pass;
            combo += 1;
        }
    }
    let detail = if failures.is_empty() {
        format!(
            "{} integrands x {} integrators, discrepancy medians strictly decreasing, final <= 1% of scale",
            INTEGRANDS.len(),
            INTEGRATORS.len()
        )
    } else {
        failures.join("; ")
    };
    Ok(SuiteOutput {
        tables: vec![table],
        criteria: vec![CriterionResult::new(
            "3",
            "forward integral equals the Itô integral",
            ok,
            detail,
        )],
    })
}

// ---------------------------------------------------------------- qv

pub fn qv(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let space = cfg.space()?;
    let grid = cfg.grid()?;
    let ladder = cfg.ladder()?;
    let ens = ensemble(cfg);
    let m = grid.n_steps();
    let horizon = grid.horizon();
    let trace_q = space.trace_q();
    let n = space.n_modes();
    let mut reports = Vec::new();
    let mut criteria = Vec::new();

    // (a) bounded-variation paths
    let rule_a = VerdictRule::new(0.01 * trace_q * horizon).with_target(0.0);
    let bv = ladder_study(
        "scalar_qv",
        &space,
        None,
        &grid,
        &ladder,
        &ens,
        &[m / 2, m],
        &rule_a,
        |path| {
            let w = sample_q_wiener(&space, &grid, ens.seed(path, StreamPurpose::QWiener));
            let v = running_integral(&w);
            Ok(StudySample {
                x: v.clone(),
                y: v,
                integrand: None,
            })
        },
    )?;
    let a_ok = bv.verdict.converges();
    let a_detail = format!("BV scalar QV ladder verdict {}", bv.verdict);
    let mut bv = bv;
    bv.estimator = "scalar_qv[bounded_variation]".into();
    reports.push(bv);

    // (b) Q-Wiener scalar QV against (t − s) Tr Q
    let times = [m / 4, m / 2, m];
    let rule_b = VerdictRule::new(0.05 * trace_q * horizon);
    let mut wq = ladder_study(
        "scalar_qv",
        &space,
        None,
        &grid,
        &ladder,
        &ens,
        &times,
        &rule_b,
        |path| {
            let w = sample_q_wiener(&space, &grid, ens.seed(path, StreamPurpose::QWiener));
            Ok(StudySample {
                x: w.clone(),
                y: w,
                integrand: None,
            })
        },
    )?;
    wq.estimator = "scalar_qv[q_wiener]".into();
    let mut b_ok = true;
    let mut b_errors = Vec::new();
    for &i in &times {
        let t = grid.time(i);
        let target = (t - grid.t_start()) * trace_q;
        let final_median = *wq.medians_at(t).last().expect("non-empty ladder");
        let rel = (final_median - target).abs() / target;
        b_errors.push(rel);
        b_ok &= rel <= 0.05;
    }
    reports.push(wq);

    // (c) tensor QV of the horizon convolution ∫ e^{(T−r)A} dW_Q, sampled exactly
    // on the grid, against ∫ (ΨQ^{1/2})(ΨQ^{1/2})* dr; a smoothly modulated
    // integrand is checked alongside
    let eps = *ladder.epsilons().last().expect("non-empty ladder");
    let lambda = space.eigenvalues().to_vec();
    let (dt, t_end) = (grid.dt(), grid.t_end());
    let tensors: Vec<(Vec<f64>, Vec<f64>)> = ens
        .map(|path| -> Result<(Vec<f64>, Vec<f64>)> {
            let w = sample_q_wiener(&space, &grid, ens.seed(path, StreamPurpose::QWiener));
            let conv = diagonal_wiener_integral(&w, |t, k| {
                convolution_cell_scale(lambda[k], t_end - t - dt, dt)
            });
            let modulated = diagonal_wiener_integral(&w, |t, _| modulation(cfg, t));
            Ok((
                tensor_qv(&conv, &conv, eps)?.raw(m).to_vec(),
                tensor_qv(&modulated, &modulated, eps)?.raw(m).to_vec(),
            ))
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let q = space.q_eigenvalues();
    let conv_target: Vec<f64> = (0..n)
        .map(|k| q[k] * exp_integral(2.0 * lambda[k], horizon))
        .collect();
    // ∫ψ² dr = (T − s)(1 + 1/8)
    let modulated_target: Vec<f64> = (0..n).map(|k| q[k] * horizon * 1.125).collect();
    let mut tensor_table = Table::new(
        "qv_tensor",
        &[
            "integrand",
            "j",
            "k",
            "epsilon",
            "mean",
            "median",
            "target",
            "mean_se",
            "relative_error",
        ],
    );
    let (mut c_ok, mut worst_rel) = (true, 0.0f64);
    let (mut modulated_ok, mut worst_modulated) = (true, 0.0f64);
    let (mut bracket_ok, mut worst_z) = (true, 0.0f64);
    for (label, diag) in [
        ("horizon_convolution", &conv_target),
        ("modulated", &modulated_target),
    ] {
        for j in 0..n {
            for k in 0..n {
                let vals: Vec<f64> = tensors
                    .iter()
                    .map(|t| if label == "modulated" { &t.1 } else { &t.0 }[j * n + k])
                    .collect();
                let (avg, med) = (mean(&vals), median(&vals));
                let se = std_dev(&vals) / (vals.len() as f64).sqrt();
                let target = if j == k { diag[j] } else { 0.0 };
                let scale = (diag[j] * diag[k]).sqrt();
                let rel = if label == "modulated" {
                    let rel = (med - target).abs() / scale;
                    worst_modulated = worst_modulated.max(rel);
                    modulated_ok &= rel <= 0.05;
                    if j != k {
                        let z = med.abs() / ((std::f64::consts::PI / 2.0).sqrt() * se);
                        worst_z = worst_z.max(z);
                        bracket_ok &= z <= 3.0;
                    }
                    rel
                } else {
                    let rel = (avg - target).abs() / scale;
                    worst_rel = worst_rel.max(rel);
                    c_ok &= rel <= 0.05;
                    rel
                };
                tensor_table.push(vec![
                    label.into(),
                    (j + 1).to_string(),
                    (k + 1).to_string(),
                    fmt_f64(eps),
                    fmt_f64(avg),
                    fmt_f64(med),
                    fmt_f64(target),
                    fmt_f64(se),
                    fmt_f64(rel),
                ]);
            }
        }
    }

    // (d) scalar QV of the mild heat solution grows with the number of modes
    let sizes = [n, 2 * n, 4 * n];
    let models: Vec<SPDEModel> = sizes
        .iter()
        .map(|&k| heat_model(cfg, k))
        .collect::<Result<_>>()?;
    let multiples = ladder.multiples().to_vec();
    // per path: [size][rung]
    let trend: Vec<Vec<Vec<f64>>> = ens
        .map(|path| -> Result<Vec<Vec<f64>>> {
            models
                .iter()
                .map(|model| {
                    let w = sample_q_wiener(
                        &model.space,
                        &grid,
                        ens.seed(path, StreamPurpose::QWiener),
                    );
                    let x = simulate_mild(model, &grid, &w)?;
                    multiples
                        .iter()
                        .map(|&p| Ok(scalar_qv(x.x(), p as f64 * grid.dt())?.last()[0]))
                        .collect()
                })
                .collect()
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let mut trend_table = Table::new(
        "qv_modes",
        &["n_modes", "epsilon", "q05", "q50", "q95", "n_paths"],
    );
    let mut d_ok = true;
    let mut d_medians_finest = Vec::new();
    for (r, &p) in multiples.iter().enumerate() {
        let mut medians = Vec::new();
        for (si, &size) in sizes.iter().enumerate() {
            let s = Summary::of(&trend.iter().map(|t| t[si][r]).collect::<Vec<_>>());
            medians.push(s.q50);
            trend_table.push(vec![
                size.to_string(),
                fmt_f64(p as f64 * grid.dt()),
                fmt_f64(s.q05),
                fmt_f64(s.q50),
                fmt_f64(s.q95),
                cfg.n_paths.to_string(),
            ]);
        }
        d_ok &= strictly_increasing(&medians);
        d_medians_finest = medians;
    }
    let pathwise = trend
        .iter()
        .filter(|t| {
            (0..multiples.len())
                .all(|r| strictly_increasing(&t.iter().map(|s| s[r]).collect::<Vec<_>>()))
        })
        .count();

    // χ-quadratic variation of the heat solution against e_1 ⊗ e_1
    let model = heat_model(cfg, n)?;
    let phi = ChiFunctional::elementary(&space, 0, 0);
    let chi_target = q[0] * horizon;
    let rule_chi = VerdictRule::new(0.05 * chi_target).with_target(chi_target);
    let mut chi = ladder_study(
        "chi_covariation",
        &space,
        Some(&phi),
        &grid,
        &ladder,
        &ens,
        &[m],
        &rule_chi,
        |path| {
            let w = sample_q_wiener(&space, &grid, ens.seed(path, StreamPurpose::QWiener));
            let x = simulate_mild(&model, &grid, &w)?;
            Ok(StudySample {
                x: x.x().clone(),
                y: x.x().clone(),
                integrand: None,
            })
        },
    )?;
    chi.estimator = "chi_covariation[heat;e1xe1]".into();
    let chi_ok = chi.verdict.converges();
    let chi_verdict = chi.verdict.to_string();
    reports.push(chi);

    criteria.push(CriterionResult::new(
        "4a",
        "bounded-variation scalar QV converges to 0",
        a_ok,
        a_detail,
    ));
    criteria.push(CriterionResult::new(
        "4b",
        "Q-Wiener scalar QV within 5% of (t-s)TrQ",
        b_ok,
        format!(
            "relative errors at t = T/4, T/2, T: {}",
            fmt_list(&b_errors)
        ),
    ));
    criteria.push(CriterionResult::new(
        "4c",
        "tensor QV of the stochastic convolution within 5% entrywise of the covariance integral",
        c_ok,
        format!("worst entry error of the ensemble mean {worst_rel:.4} (relative to sqrt(target_jj target_kk))"),
    ));
    criteria.push(CriterionResult::new(
        "aux-modulated",
        "tensor QV medians of a modulated Wiener integral within 5% entrywise",
        modulated_ok,
        format!("worst entry error {worst_modulated:.4}"),
    ));
    criteria.push(CriterionResult::new(
        "4d",
        "mild heat scalar QV strictly increasing in N",
        d_ok,
        format!(
            "N = {sizes:?}, medians at smallest ε {}, {pathwise}/{} paths strictly increasing at every ε",
            fmt_sci_list(&d_medians_finest),
            cfg.n_paths
        ),
    ));
    criteria.push(CriterionResult::new(
        "aux-bracket",
        "off-diagonal tensor QV medians within 3 SE of 0",
        bracket_ok,
        format!("largest |median|/SE = {worst_z:.2}"),
    ));
    criteria.push(CriterionResult::new(
        "aux-chi",
        "χ-QV of the heat solution against e1⊗e1 converges to q_1 (T-s)",
        chi_ok,
        chi_verdict,
    ));
    Ok(SuiteOutput {
        tables: vec![
            ladder_table("qv_ladders", &reports),
            tensor_table,
            trend_table,
        ],
        criteria,
    })
}

// ---------------------------------------------------------------- mild

pub fn mild(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let space = cfg.space()?;
    let grid = cfg.grid()?;
    let ladder = cfg.ladder()?;
    let ens = ensemble(cfg);
    let model = heat_model(cfg, space.n_modes())?;

    // zero χ̄-QV certificate
    let certs: Vec<(Vec<f64>, bool)> = ens
        .map(|path| -> Result<(Vec<f64>, bool)> {
            let w = sample_q_wiener(&space, &grid, ens.seed(path, StreamPurpose::QWiener));
            let x = simulate_mild(&model, &grid, &w)?;
            let c = zero_chi_qv_certificate(&space, &x, &ladder)?;
            Ok((c.rows.iter().map(|r| r.a_eps).collect(), c.holds()))
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let violations: Vec<String> = certs
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.1)
        .map(|(i, _)| seed_label(cfg, i as u64))
        .collect();
    let mut cert_table = Table::new(
        "certificate",
        &["epsilon", "q05", "q50", "q95", "n_paths", "n_violations"],
    );
    let mut medians = Vec::new();
    for (r, eps) in ladder.epsilons().into_iter().enumerate() {
        let s = Summary::of(&certs.iter().map(|c| c.0[r]).collect::<Vec<_>>());
        medians.push(s.q50);
        cert_table.push(vec![
            fmt_f64(eps),
            fmt_f64(s.q05),
            fmt_f64(s.q50),
            fmt_f64(s.q95),
            cfg.n_paths.to_string(),
            violations.len().to_string(),
        ]);
    }
    let drop = medians[0] / medians[medians.len() - 1];
    let cert_ok = violations.is_empty() && strictly_decreasing(&medians) && drop >= 8.0;
    let cert = CriterionResult::new(
        "5",
        "zero χ̄-QV certificate",
        cert_ok,
        format!(
            "bound held on {}/{} paths, medians {}, largest/smallest = {drop:.1}",
            certs.len() - violations.len(),
            certs.len(),
            fmt_sci_list(&medians)
        ),
    )
    .with_failing_seeds(violations);

    // Ondrejat identity across a dt ladder sharing one noise path
    let (fine, factors) = dt_ladder(cfg)?;
    let z = space.unit(0);
    let az_sq = dot(&space.apply_generator(&z)?, &space.apply_generator(&z)?);
    let sups: Vec<(Vec<f64>, f64)> = ens
        .map(|path| -> Result<(Vec<f64>, f64)> {
            let w = sample_q_wiener(&space, &fine, ens.seed(path, StreamPurpose::QWiener));
            let mut out = Vec::new();
            let mut scale = 0.0;
            for f in factors {
                let wc = w.coarsen(f)?;
                let x = simulate_mild(&model, wc.grid(), &wc)?;
                let y = y_process(&x);
                out.push(ondrejat_residual(&space, &x, &y, &z)?.sup_norm());
                scale = x.x().project(&z)?.sup_norm();
            }
            Ok((out, scale))
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let dts: Vec<f64> = factors.iter().map(|&f| fine.dt() * f as f64).collect();
    let ond_medians: Vec<f64> = (0..factors.len())
        .map(|r| median(&sups.iter().map(|s| s.0[r]).collect::<Vec<_>>()))
        .collect();
    let ratios = successive_ratios(&ond_medians);
    let scale = az_sq * median(&sups.iter().map(|s| s.1).collect::<Vec<_>>());
    let stochastic_ok = ratios.iter().all(|r| (0.4..=0.6).contains(r))
        && ond_medians
            .iter()
            .zip(&dts)
            .all(|(m, dt)| *m <= 10.0 * dt * scale);
    let mut ond_table = Table::new(
        "ondrejat",
        &["case", "dt", "median_sup_residual", "bound", "n_paths"],
    );
    for (m, dt) in ond_medians.iter().zip(&dts) {
        ond_table.push(vec![
            "heat".into(),
            fmt_f64(*dt),
            fmt_f64(*m),
            fmt_f64(10.0 * dt * scale),
            cfg.n_paths.to_string(),
        ]);
    }
    // deterministic flow in one mode against the left-point quadrature bound
    let one = cfg.space_with(1)?;
    let det_model = SPDEModel::new(
        one.clone(),
        Drift::Zero,
        Diffusion::zero(1),
        HVector::new(vec![1.0]),
    )?;
    let lambda = one.eigenvalues()[0];
    let mut det_sups = Vec::new();
    let mut det_ok = true;
    for f in factors {
        let g = fine.coarsen(f)?;
        let x = simulate_mild(&det_model, &g, &GridPath::zeros(g, 1))?;
        let y = y_process(&x);
        let sup = ondrejat_residual(&one, &x, &y, &[1.0])?.sup_norm();
        let mass: f64 = (0..g.n_steps())
            .map(|i| x.x().value(i).abs() * g.dt())
            .sum();
        let bound = 0.5 * lambda * lambda * g.dt() * mass;
        det_ok &= sup <= bound;
        det_sups.push(sup);
        ond_table.push(vec![
            "deterministic".into(),
            fmt_f64(g.dt()),
            fmt_f64(sup),
            fmt_f64(bound),
            "1".into(),
        ]);
    }
    let det_ratios = successive_ratios(&det_sups);
    det_ok &= det_ratios.iter().all(|r| (0.4..=0.6).contains(r));
    let ond = CriterionResult::new(
        "6",
        "Ondrejat residual halves with dt",
        stochastic_ok && det_ok,
        format!(
            "median sup-residual ratios {} (fit {:.3}), deterministic ratios {}",
            fmt_list(&ratios),
            regression_factor(&dts, &ond_medians),
            fmt_list(&det_ratios)
        ),
    );
    Ok(SuiteOutput {
        tables: vec![cert_table, ond_table],
        criteria: vec![cert, ond],
    })
}

// ---------------------------------------------------------------- ito-check

/// Direction used by the Itô and weak-Dirichlet checks: `e_1 + e_2 / 2`.
fn test_direction(space: &TruncatedSpace) -> HVector {
    let mut h = space.unit(0);
    if space.n_modes() > 1 {
        h.0[1] = 0.5;
    }
    h
}

pub fn ito_check(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let space = cfg.space()?;
    let ens = ensemble(cfg);
    let model = heat_model(cfg, space.n_modes())?;
    let (fine, factors) = dt_ladder(cfg)?;
    let dts: Vec<f64> = factors.iter().map(|&f| fine.dt() * f as f64).collect();
    let functions = [
        TestFunction::new(TestKind::Constant, space.unit(0)),
        TestFunction::new(TestKind::Linear, space.unit(0)),
        TestFunction::new(TestKind::Quadratic, space.unit(0)),
    ];
    // per path: [function][dt] residual
    let residuals: Vec<Vec<Vec<f64>>> = ens
        .map(|path| -> Result<Vec<Vec<f64>>> {
            let w = sample_q_wiener(&space, &fine, ens.seed(path, StreamPurpose::QWiener));
            let paths = factors
                .iter()
                .map(|&f| {
                    let wc = w.coarsen(f)?;
                    simulate_mild(&model, wc.grid(), &wc)
                })
                .collect::<Result<Vec<_>>>()?;
            functions
                .iter()
                .map(|f| paths.iter().map(|x| ito_residual(f, &model, x)).collect())
                .collect()
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let mut table = Table::new("ito", &["function", "dt", "q05", "q50", "q95", "n_paths"]);
    let mut medians = vec![Vec::new(); functions.len()];
    for (fi, f) in functions.iter().enumerate() {
        for (di, dt) in dts.iter().enumerate() {
            let s = Summary::of(
                &residuals
                    .iter()
                    .map(|r| r[fi][di].abs())
                    .collect::<Vec<_>>(),
            );
            medians[fi].push(s.q50);
            table.push(vec![
                f.kind.to_string(),
                fmt_f64(*dt),
                fmt_f64(s.q05),
                fmt_f64(s.q50),
                fmt_f64(s.q95),
                cfg.n_paths.to_string(),
            ]);
        }
    }
    let constant_nonzero: Vec<String> = residuals
        .iter()
        .enumerate()
        .filter(|(_, r)| r[0].iter().any(|v| *v != 0.0))
        .map(|(i, _)| seed_label(cfg, i as u64))
        .collect();
    let ratios = successive_ratios(&medians[2]);
    let ito_ok = constant_nonzero.is_empty() && ratios.iter().all(|r| (0.6..=0.85).contains(r));
    let ito = CriterionResult::new(
        "7",
        "Itô formula residual for mild processes",
        ito_ok,
        format!(
            "quadratic f median |residual| {} ratios {} (fit {:.3}); constant f exactly 0 on {}/{} paths",
            fmt_sci_list(&medians[2]),
            fmt_list(&ratios),
            regression_factor(&dts, &medians[2]),
            cfg.n_paths - constant_nonzero.len(),
            cfg.n_paths
        ),
    )
    .with_failing_seeds(constant_nonzero);

    let (ortho_tables, ortho) = orthogonality(cfg, &model)?;
    let mut tables = vec![table];
    tables.extend(ortho_tables);
    Ok(SuiteOutput {
        tables,
        criteria: vec![ito, ortho],
    })
}

fn orthogonality(
    cfg: &ExperimentConfig,
    model: &SPDEModel,
) -> Result<(Vec<Table>, CriterionResult)> {
    let space = &model.space;
    let grid = cfg.grid()?;
    let ladder = cfg.ladder()?;
    let ens = ensemble(cfg);
    let dt = grid.dt();
    let multiples = ladder.multiples().to_vec();
    let h = test_direction(space);
    let functions = [
        TestFunction::new(TestKind::Linear, h.clone()),
        TestFunction::new(TestKind::Quadratic, h.clone()),
        TestFunction::new(TestKind::Sin, h),
    ];
    let g = HVector::new((1..=space.n_modes()).map(|k| 1.0 / k as f64).collect());
    let martingales = [
        TestMartingale::WienerMode(0),
        TestMartingale::HorizonConvolution(g),
        TestMartingale::IndependentBm,
    ];
    let last = *ladder.epsilons().last().expect("non-empty ladder");
    // per path, per (f, N): covariation per rung, then [F, F] and [N, N] at the smallest ε
    let per_path: Vec<Vec<(Vec<f64>, f64, f64)>> = ens
        .map(|path| -> Result<Vec<(Vec<f64>, f64, f64)>> {
            let seed = ens.seed(path, StreamPurpose::QWiener);
            let w = sample_q_wiener(space, &grid, seed);
            let x = simulate_mild(model, &grid, &w)?;
            let ns = martingales
                .iter()
                .map(|mg| mg.path(space, &x, seed))
                .collect::<Result<Vec<_>>>()?;
            let mut out = Vec::new();
            for f in &functions {
                let a = dirichlet_remainder(f, &x)?;
                let fx = GridPath::scalar(
                    grid,
                    (0..=grid.n_steps())
                        .map(|i| f.value(grid.time(i), x.x().at(i)))
                        .collect(),
                )?;
                let ff = crate::regularization::real_covariation(&fx, &fx, last)?.last()[0];
                for n in &ns {
                    let covs = multiples
                        .iter()
                        .map(|&p| {
                            Ok(
                                crate::regularization::real_covariation(&a, n, p as f64 * dt)?
                                    .last()[0],
                            )
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let nn = crate::regularization::real_covariation(n, n, last)?.last()[0];
                    out.push((covs, ff, nn));
                }
            }
            Ok(out)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let mut reports = Vec::new();
    let mut scale_table = Table::new(
        "orthogonality_scale",
        &[
            "function",
            "martingale",
            "scale",
            "final_median",
            "ratio",
            "verdict",
        ],
    );
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut combo = 0;
    for f in &functions {
        for mg in &martingales {
            let scale = (median(&per_path.iter().map(|p| p[combo].1).collect::<Vec<_>>())
                * median(&per_path.iter().map(|p| p[combo].2).collect::<Vec<_>>()))
            .sqrt();
            let samples: Vec<Vec<Vec<f64>>> = per_path
                .iter()
                .map(|p| p[combo].0.iter().map(|v| vec![*v]).collect())
                .collect();
            let rule = VerdictRule::new(0.05 * scale).with_target(0.0);
            let label = format!("covariation[A_{}:{}]", f.kind, mg.label());
            let report =
                summarize_ladder(&label, &grid, &ladder, &[grid.n_steps()], &samples, &rule)?;
            let final_median = *report
                .medians_at(grid.t_end())
                .last()
                .expect("non-empty ladder");
            let ratio = final_median.abs() / scale;
            worst = worst.max(ratio);
            let pass = report.verdict.converges() && ratio <= 0.1;
            ok &= pass;
            scale_table.push(vec![
                f.kind.to_string(),
                mg.label(),
                fmt_f64(scale),
                fmt_f64(final_median),
                fmt_f64(ratio),
                report.verdict.to_string(),
            ]);
            reports.push(report);
            combo += 1;
        }
    }
    let criterion = CriterionResult::new(
        "8",
        "weak-Dirichlet orthogonality",
        ok,
        format!(
            "{} functions x {} martingales, worst |final median|/scale = {worst:.4}",
            functions.len(),
            martingales.len()
        ),
    );
    Ok((
        vec![ladder_table("orthogonality", &reports), scale_table],
        criterion,
    ))
}

// ---------------------------------------------------------------- control

/// Random admissible policies used to probe `v ≤ J`.
pub fn random_policies(cfg: &ExperimentConfig, count: usize) -> Vec<FeedbackPolicy> {
    let n = cfg.n_modes;
    let r = cfg.control_radius;
    let space = cfg.space().expect("validated config");
    let lambda = space.eigenvalues().to_vec();
    let h = cfg.control_h();
    let t_end = cfg.t_end;
    let mut rng = SeedSpec::new(cfg.master_seed, 0, StreamPurpose::Auxiliary(30)).rng(0);
    let clip = move |mut a: Vec<f64>| {
        let len = norm(&a);
        if len > r {
            a.iter_mut().for_each(|v| *v *= r / len);
        }
        HVector::new(a)
    };
    (0..count)
        .map(|i| {
            let id = format!("random_{i:02}");
            match i % 4 {
                0 => FeedbackPolicy::constant(id, HVector::new(uniform_in_ball(&mut rng, n, r))),
                1 => {
                    let kappa = 3.0 * rng.random::<f64>();
                    FeedbackPolicy::new(id, move |_, x| {
                        Ok(clip(x.iter().map(|v| -kappa * v).collect()))
                    })
                }
                2 => {
                    let shift = uniform_in_ball(&mut rng, n, 0.3 * r);
                    let (lambda, h) = (lambda.clone(), h.clone());
                    FeedbackPolicy::new(id, move |t, _| {
                        Ok(clip(
                            (0..n)
                                .map(|k| -(lambda[k] * (t_end - t)).exp() * h[k] + shift[k])
                                .collect(),
                        ))
                    })
                }
                _ => {
                    let dir = uniform_in_ball(&mut rng, n, r);
                    let freq = 1.0 + 3.0 * rng.random::<f64>();
                    FeedbackPolicy::new(id, move |t, _| {
                        let s = (2.0 * std::f64::consts::PI * freq * t).sin();
                        Ok(HVector::new(dir.iter().map(|v| v * s).collect()))
                    })
                }
            }
        })
        .collect()
}

pub fn control(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let space = cfg.space()?;
    let grid = cfg.grid()?;
    let ens = ensemble(cfg);
    let n = space.n_modes();
    let x0 = HVector::new((1..=n).map(|k| 0.5 / k as f64).collect());
    let (problem, candidate, optimal) = lq_reference(
        &space,
        cfg.control_h(),
        cfg.control_radius,
        cfg.t_start,
        cfg.t_end,
        x0,
    )?;

    // HJB residual of the closed-form candidate
    let mut rng = SeedSpec::new(cfg.master_seed, 0, StreamPurpose::Auxiliary(31)).rng(0);
    let mut worst_hjb: f64 = 0.0;
    let mut worst_terminal: f64 = 0.0;
    for _ in 0..100 {
        let t = cfg.t_start + (cfg.t_end - cfg.t_start) * rng.random::<f64>();
        let x = gaussian(&mut rng, n);
        worst_hjb = worst_hjb.max(hjb_residual(&problem, &candidate, t, &x)?.abs());
        worst_terminal = worst_terminal.max(terminal_residual(&problem, &candidate, &x).abs());
    }
    let hjb_ok = worst_hjb <= 1e-9 && worst_terminal == 0.0;
    let hjb = CriterionResult::new(
        "9",
        "HJB residual of the reference candidate",
        hjb_ok,
        format!("max |residual| {worst_hjb:.2e} at 100 points, max terminal mismatch {worst_terminal:.1e}"),
    );

    // verification identity
    let mut reports: Vec<VerificationReport> = Vec::new();
    reports.push(verification_gap(
        &problem, &candidate, &optimal, &grid, &ens,
    )?);
    reports.push(verification_gap(
        &problem,
        &candidate,
        &FeedbackPolicy::zero(n),
        &grid,
        &ens,
    )?);
    for policy in random_policies(cfg, 20) {
        reports.push(verification_gap(
            &problem, &candidate, &policy, &grid, &ens,
        )?);
    }
    let opt = &reports[0];
    let optimal_ok =
        opt.gap1.abs() <= 3.0 * opt.cost.se && opt.gap2.abs() <= 3.0 * opt.se_gap2 + 1e-12;
    // zero policy: gap₂ equals the discrete control energy Σ ½|∂_x v|² dt along the grid
    let zero = &reports[1];
    let energy: f64 = (0..grid.n_steps())
        .map(|i| 0.5 * candidate.gradient(grid.time(i), &problem.x0).norm().powi(2) * grid.dt())
        .sum();
    let zero_ok = (zero.gap2 - energy).abs() <= 3.0 * zero.se_gap2 + 1e-12;
    let all_ok = reports.iter().all(|r| r.passed());
    let failing: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.policy_id.clone())
        .collect();
    let mut table = Table::new("verification", &VerificationReport::CSV_HEADER);
    reports.iter().for_each(|r| table.push(r.csv_row()));
    let mut detail = format!(
        "decomposition {}; optimal gap1 {:.2e} (SE {:.2e}), gap2 {:.2e}; zero-policy gap2 {:.4e} vs energy {:.4e}; {}/{} policies pass",
        candidate.provenance.decomposition_status(),
        opt.gap1,
        opt.cost.se,
        opt.gap2,
        zero.gap2,
        energy,
        reports.len() - failing.len(),
        reports.len()
    );
    if !failing.is_empty() {
        detail.push_str(&format!("; failing {}", failing.join(" ")));
    }
    let verification = CriterionResult::new(
        "10",
        "verification identity",
        optimal_ok && zero_ok && all_ok,
        detail,
    );
    Ok(SuiteOutput {
        tables: vec![table],
        criteria: vec![hjb, verification],
    })
}

/// Error helper for unknown suite names.
pub fn unknown_suite(name: &str) -> Error {
    Error::Config {
        line: 0,
        message: format!(
            "unknown suite `{name}`; expected one of {}",
            SUITES.join(", ")
        ),
    }
}
