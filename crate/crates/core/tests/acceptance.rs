//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (run with `--nocapture` to see them) or failing with
//! the same numbers in the panic message.
//!
//! Three checks assert idealized behaviors that double precision cannot
//! represent and fail by construction, reporting the measured values:
//! criterion 4's cold-end monotonicity margins (energy differences freeze
//! like exp(-gap/T) below T ~ 0.7, far under any floating-point tolerance),
//! criterion 5's strict positivity/decrease of the energy gap (the finite
//! penalization floor biases the energy by about -|V0|^2 * eps, and the
//! thermal signal underflows), and criterion 9's squared-residual slope of
//! 1.0 (the converged solver satisfies n - n0 = eps * A identically, so the
//! squared residual scales as eps^2 once the potential norm stabilizes).

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use qmaxent_core::{
    apply_z, chemical_potential_residual, check_energy_entropy_relation, compute_m0,
    continuation_solve, eigendecompose_hamiltonian, geometric_grid, inequality_suite,
    match_energy, negz_suite, solve_two_moment, temperature_scan, varsigma_sum_across_cutoffs,
    varsigma_table, zero_t_limit, DensityOperator, FieldSample, HamiltonianEig,
    PenalizedSolveOptions, SpectralGrid,
};

const SEED: u64 = 42;

fn arc_grid(k: usize) -> Arc<SpectralGrid> {
    Arc::new(SpectralGrid::with_default_nodes(k))
}

fn cosine_density(grid: &SpectralGrid) -> FieldSample {
    FieldSample::from_real_fn(grid, |x| 1.0 + 0.3 * (2.0 * PI * x).cos())
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[test]
fn criterion_01_uniform_density_oracle() {
    let grid = arc_grid(16);
    let n0 = FieldSample::constant(&grid, 1.0);
    let opts = PenalizedSolveOptions::default();
    let mut worst_a = 0.0f64;
    let mut worst_n = 0.0f64;
    for t in [0.5, 1.0, 2.0] {
        let (rho, a, report) = continuation_solve(&grid, &n0, t, &opts).unwrap();
        assert!(report.converged);
        let theta: f64 = grid.gamma().iter().map(|&g| (-g / t).exp()).sum();
        let expect = t * theta.ln();
        for v in a.values() {
            worst_a = worst_a.max((v.re - expect).abs());
        }
        for v in rho.density().values() {
            worst_n = worst_n.max((v.re - 1.0).abs());
        }
    }
    assert!(
        worst_a <= 1e-8 && worst_n <= 1e-8,
        "criterion 1 FAIL: |A - T log theta| = {worst_a:.3e}, |n - 1| = {worst_n:.3e}"
    );
    println!(
        "criterion 1 PASS: uniform oracle |A - T log theta| <= {worst_a:.3e}, |n - 1| <= {worst_n:.3e}"
    );
}

#[test]
fn criterion_02_gauge_decomposition() {
    let grid = arc_grid(16);
    let n0 = cosine_density(&grid);
    let u0 = FieldSample::constant(&grid, 2.0 * PI);
    // The criterion pins the tolerances; the ladder is deepened two rungs so
    // the current residual 2*pi*eps*|A| clears the stated 1e-5 comfortably.
    let mut opts = PenalizedSolveOptions::default();
    opts.epsilon_ladder.extend([1e-7, 1e-8]);
    let sol = solve_two_moment(&grid, &n0, &u0, 1.0, &opts).unwrap();

    let n = sol.ungauged.density();
    let nu2 = FieldSample::from_real_samples(
        &grid,
        &n.values()
            .iter()
            .zip(u0.values())
            .map(|(nv, uv)| nv.re * uv.re * uv.re)
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let shift = 0.5 * grid.integrate(&nu2).unwrap().re;
    let energy_defect =
        ((sol.state.energy() - sol.ungauged.energy()) - shift).abs() / shift.abs();
    let entropy_defect = (sol.state.entropy() - sol.ungauged.entropy()).abs();
    let current = sol.state.moments().current;
    let target = FieldSample::from_real_samples(
        &grid,
        &n0.values()
            .iter()
            .zip(u0.values())
            .map(|(nv, uv)| nv.re * uv.re)
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let current_defect = grid.l2_norm(&current.sub(&target)).unwrap();
    assert!(
        energy_defect <= 1e-10 && entropy_defect <= 1e-12 && current_defect <= 1e-5,
        "criterion 2 FAIL: energy shift rel {energy_defect:.3e}, entropy diff {entropy_defect:.3e}, current L2 {current_defect:.3e}"
    );
    println!(
        "criterion 2 PASS: energy shift rel {energy_defect:.3e}, entropy diff {entropy_defect:.3e}, current L2 {current_defect:.3e}"
    );
}

#[test]
fn criterion_03_moment_identities() {
    let grid = arc_grid(8);
    let mut worst_trace = 0.0f64;
    let mut worst_energy = 0.0f64;
    let mut worst_w = 0.0f64;
    let mut worst_lower = 0.0f64;
    for trial in 0..200u64 {
        let rho = qmaxent_core::lab::families::draw(&grid, trial, SEED);
        let m = rho.moments();
        let scale_t = 1.0 + rho.trace().abs();
        let scale_e = 1.0 + rho.energy().abs();

        let n_int = grid.integrate(&m.density).unwrap().re;
        worst_trace = worst_trace.max((rho.trace() - n_int).abs() / scale_t);

        let k_int = grid.integrate(&m.kinetic).unwrap().re;
        worst_energy = worst_energy.max((rho.energy() - k_int).abs() / scale_e);

        // Independent route for w straight from the matrix anti-diagonals.
        let w_matrix = rho.total_energy_density_matrix_route();
        let wd = grid.l2_norm(&w_matrix.sub(&m.total_energy)).unwrap();
        worst_w = worst_w.max(wd / scale_e);

        let sqrt_n = FieldSample::from_real_samples(
            &grid,
            &m.density
                .values()
                .iter()
                .map(|v| v.re.max(0.0).sqrt())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let grad = grid.differentiate(&sqrt_n).unwrap();
        let lhs = 0.5 * grid.l2_norm(&grad).unwrap().powi(2);
        worst_lower = worst_lower.max(lhs - rho.energy());
    }
    assert!(
        worst_trace <= 1e-12 && worst_energy <= 1e-12 && worst_w <= 1e-10 && worst_lower <= 1e-12,
        "criterion 3 FAIL: trace {worst_trace:.3e}, energy {worst_energy:.3e}, w {worst_w:.3e}, lower bound excess {worst_lower:.3e}"
    );
    println!(
        "criterion 3 PASS: trace {worst_trace:.3e}, energy {worst_energy:.3e}, w {worst_w:.3e}, lower bound excess {worst_lower:.3e}"
    );
}

#[test]
fn criterion_04_monotone_energy_entropy() {
    let grid = arc_grid(8);
    let n0 = cosine_density(&grid);
    let u0 = FieldSample::constant(&grid, 0.0);
    let opts = PenalizedSolveOptions::default();
    let t_grid = geometric_grid(0.05, 5.0, 64);
    let scan = temperature_scan(&grid, &n0, &u0, &t_grid, &opts).unwrap();
    assert!(scan.all_converged(), "criterion 4: inner solve failures");
    let margin = 10.0 * opts.tol_fixed_point;
    let mut bad_e = Vec::new();
    let mut bad_s = Vec::new();
    for w in scan.records.windows(2) {
        let de = w[1].energy - w[0].energy;
        let ds = w[1].entropy - w[0].entropy;
        if de <= margin {
            bad_e.push((w[0].temperature, de));
        }
        if ds >= -margin {
            bad_s.push((w[0].temperature, ds));
        }
    }
    assert!(
        bad_e.is_empty() && bad_s.is_empty(),
        "criterion 4 FAIL: {} of 63 energy secants and {} of 63 entropy secants miss the 10x \
         inner-tolerance margin ({margin:.1e}); the energy difference freezes like exp(-gap/T) \
         below T ~ 0.7 and is not representable in f64 there. First failing pair: T = {:.4}, \
         dE = {:.3e}",
        bad_e.len(),
        bad_s.len(),
        bad_e.first().or(bad_s.first()).map(|p| p.0).unwrap_or(f64::NAN),
        bad_e.first().or(bad_s.first()).map(|p| p.1).unwrap_or(f64::NAN),
    );
    println!("criterion 4 PASS: all secants clear the {margin:.1e} margin");
}

#[test]
fn criterion_05_zero_temperature_limit() {
    let grid = arc_grid(16);
    let n0 = cosine_density(&grid);
    let u0 = FieldSample::constant(&grid, 0.0);
    let opts = PenalizedSolveOptions::default();
    let temps: Vec<f64> = (0..8).map(|i| 1.0 / (1 << i) as f64).collect();
    let report = zero_t_limit(&grid, &n0, &u0, &temps, &opts).unwrap();
    assert!(report.truncated.is_none(), "criterion 5: sequence truncated");

    // Independent dense-quadrature oracle for m0 (composite Simpson with the
    // analytic derivative of sqrt(1 + 0.3 cos)).
    let a = 0.3;
    let intervals = 1 << 14;
    let h = 1.0 / intervals as f64;
    let integrand = |x: f64| {
        let d = -a * PI * (2.0 * PI * x).sin() / (1.0 + a * (2.0 * PI * x).cos()).sqrt();
        d * d
    };
    let mut acc = integrand(0.0) + integrand(1.0);
    for j in 1..intervals {
        acc += if j % 2 == 1 { 4.0 } else { 2.0 } * integrand(j as f64 * h);
    }
    let m0_oracle = 0.5 * (acc * h / 3.0);
    let m0_defect = (report.m0 - m0_oracle).abs();

    let gaps: Vec<f64> = report.records.iter().map(|r| r.gap).collect();
    let all_positive = gaps.iter().all(|&g| g > 0.0);
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let final_gap = *gaps.last().unwrap();
    assert!(
        m0_defect <= 1e-8 && all_positive && decreasing && final_gap <= 1e-4,
        "criterion 5 FAIL: m0 defect {m0_defect:.3e} (<=1e-8: {}), gaps positive: {}, \
         decreasing: {}, final gap {final_gap:.3e} (<=1e-4: {}). The finite penalization floor \
         biases E by about -|V0|^2*eps ~ -1e-6 while the thermal gap underflows below T ~ 1.2, \
         so strict positivity/decrease is not representable. Gaps: {:?}",
        m0_defect <= 1e-8,
        all_positive,
        decreasing,
        final_gap <= 1e-4,
        gaps
    );
    println!("criterion 5 PASS: m0 defect {m0_defect:.3e}, final gap {final_gap:.3e}");
}

#[test]
fn criterion_06_energy_entropy_relation() {
    let grid = arc_grid(8);
    let n0 = cosine_density(&grid);
    let u0 = FieldSample::constant(&grid, 0.0);
    let opts = PenalizedSolveOptions::default();
    // 64 points per decade over [0.05, 5] (two decades), then doubled.
    let coarse_grid = geometric_grid(0.05, 5.0, 129);
    let fine_grid = geometric_grid(0.05, 5.0, 257);
    let coarse = temperature_scan(&grid, &n0, &u0, &coarse_grid, &opts).unwrap();
    let fine = temperature_scan(&grid, &n0, &u0, &fine_grid, &opts).unwrap();
    let rc = check_energy_entropy_relation(&coarse).unwrap();
    let rf = check_energy_entropy_relation(&fine).unwrap();
    let shrink = rc.max_normalized_defect / rf.max_normalized_defect;
    assert!(
        rc.max_normalized_defect <= 5e-3 && shrink >= 3.0,
        "criterion 6 FAIL: max normalized defect {:.3e} (<=5e-3), refinement gain {shrink:.2}x \
         (>=3x); {} pairs under the noise floor excluded",
        rc.max_normalized_defect,
        rc.excluded_pairs
    );
    println!(
        "criterion 6 PASS: max normalized defect {:.3e} over {} pairs ({} frozen pairs below \
         the {:.1e} energy-difference floor excluded), refinement gain {shrink:.2}x",
        rc.max_normalized_defect, rc.included_pairs, rc.excluded_pairs, rc.floor
    );
}

#[test]
fn criterion_07_frechet_kernel() {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let grid = arc_grid(8);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let gibbs = |eig: &HamiltonianEig, beta: f64| {
        let d = eig.lambdas.len();
        let w = DMatrix::<Complex64>::from_fn(d, d, |r, c| {
            if r == c {
                Complex64::new((-beta * eig.lambdas[r]).exp(), 0.0)
            } else {
                Complex64::ZERO
            }
        });
        &eig.vectors * w * eig.vectors.adjoint()
    };
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let a_amp: f64 = rng.gen_range(0.2..1.5);
        let s_amp: f64 = rng.gen_range(0.2..1.5);
        let beta: f64 = rng.gen_range(0.5..2.0);
        let pa: f64 = rng.gen_range(0.0..2.0 * PI);
        let ps: f64 = rng.gen_range(0.0..2.0 * PI);
        let a = FieldSample::from_real_fn(&grid, |x| a_amp * (2.0 * PI * x + pa).cos());
        let dir = FieldSample::from_real_fn(&grid, |x| {
            s_amp * (2.0 * PI * x + ps).cos() + 0.3 * (4.0 * PI * x).sin()
        });
        let eig = eigendecompose_hamiltonian(&grid, &a).unwrap();
        let z = apply_z(&grid, &eig, beta, &dir).unwrap();
        let h = 1e-5;
        let plus = eigendecompose_hamiltonian(&grid, &a.add_scaled(&dir, h)).unwrap();
        let minus = eigendecompose_hamiltonian(&grid, &a.add_scaled(&dir, -h)).unwrap();
        let fd = (gibbs(&plus, beta) - gibbs(&minus, beta)).scale(1.0 / (2.0 * h));
        let scale = z.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-12);
        let err = (&z - fd).iter().map(|v| v.norm()).fold(0.0, f64::max);
        worst = worst.max(err / scale);
    }
    // Kernel table structure on a generic Hamiltonian.
    let a = FieldSample::from_real_fn(&grid, |x| 0.8 * (2.0 * PI * x).cos());
    let eig = eigendecompose_hamiltonian(&grid, &a).unwrap();
    let beta = 1.2;
    let table = varsigma_table(&eig.lambdas, beta, 1e-8).unwrap();
    let d = eig.lambdas.len();
    let mut structure_ok = true;
    for m in 0..d {
        for k in 0..d {
            structure_ok &= table.table[(m, k)] == table.table[(k, m)];
            structure_ok &= table.table[(m, k)] <= 0.0;
        }
        structure_ok &=
            (table.table[(m, m)] - (-beta * (-beta * eig.lambdas[m]).exp())).abs() == 0.0;
    }
    assert!(
        worst <= 1e-6 && structure_ok,
        "criterion 7 FAIL: worst finite-difference mismatch {worst:.3e}, structure ok {structure_ok}"
    );
    println!("criterion 7 PASS: worst finite-difference mismatch {worst:.3e}");
}

#[test]
fn criterion_08_negz_quadratic_form() {
    let grid = arc_grid(8);
    let first = negz_suite(&grid, SEED, 1000);
    let second = negz_suite(&grid, SEED, 1000);
    assert!(
        first <= 1e-12 && first.to_bits() == second.to_bits(),
        "criterion 8 FAIL: max normalized quadratic form {first:.3e}, reproducible: {}",
        first.to_bits() == second.to_bits()
    );
    println!("criterion 8 PASS: max normalized quadratic form {first:.3e}, seed-reproducible");
}

#[test]
fn criterion_09_penalization_rate() {
    let grid = arc_grid(8);
    let n0 = cosine_density(&grid);
    let opts = PenalizedSolveOptions::default();
    let (_, _, report) = continuation_solve(&grid, &n0, 1.0, &opts).unwrap();
    let rungs = &report.rungs;
    let n = rungs.len();
    let a_tail_rel =
        (rungs[n - 2].a_norm_l2 - rungs[n - 1].a_norm_l2).abs() / rungs[n - 1].a_norm_l2;
    let pts: Vec<(f64, f64)> = rungs
        .iter()
        .map(|r| (r.epsilon.ln(), r.constraint_residual_l2.powi(2).ln()))
        .collect();
    let slope = fit_slope(&pts);
    assert!(
        (0.8..=1.2).contains(&slope) && a_tail_rel < 0.10,
        "criterion 9 FAIL: log-log slope of the squared residual is {slope:.3} (asserted \
         1.0 +/- 0.2), potential-norm drift across the last two rungs {a_tail_rel:.3e} \
         (< 0.10: {}). The converged rungs satisfy n - n0 = eps*A identically, so the squared \
         residual scales as eps^2 once |A| stabilizes; the measured slope ~2 is the exact \
         behavior, not a solver defect.",
        a_tail_rel < 0.10
    );
    println!(
        "criterion 9 PASS: slope {slope:.3}, potential-norm drift {a_tail_rel:.3e}"
    );
}

#[test]
fn criterion_10_energy_matching() {
    let grid = arc_grid(8);
    let n0 = cosine_density(&grid);
    let u0 = FieldSample::constant(&grid, 0.0);
    let opts = PenalizedSolveOptions::default();
    let e_at_one = solve_two_moment(&grid, &n0, &u0, 1.0, &opts)
        .unwrap()
        .state
        .energy();
    let e0 = e_at_one + 0.5;
    let result = match_energy(&grid, &n0, &u0, e0, None, 1e-6, &opts).unwrap();
    let t0 = result.temperature.unwrap();
    let e_defect = (result.state.energy() - e0).abs();

    // Floor target with a nontrivial gauge.
    let u_gauge = FieldSample::constant(&grid, 2.0 * PI);
    let m0 = compute_m0(&grid, &n0, &u_gauge).unwrap();
    let floor = match_energy(&grid, &n0, &u_gauge, m0, None, 1e-6, &opts).unwrap();
    let second_eig = floor.state.eigenvalues()[1];
    assert!(
        e_defect <= 1e-6 && t0 > 1.0 && floor.pure_state && second_eig <= 1e-10,
        "criterion 10 FAIL: |E(T0) - e0| = {e_defect:.3e}, T0 = {t0:.4}, pure state {}, \
         second eigenvalue {second_eig:.3e}",
        floor.pure_state
    );
    println!(
        "criterion 10 PASS: |E(T0) - e0| = {e_defect:.3e}, T0 = {t0:.4} > 1, floor state \
         rank-one with second eigenvalue {second_eig:.3e}"
    );
}

#[test]
fn criterion_11_inequality_suite() {
    let at_8 = inequality_suite(8, SEED, 1000);
    let at_16 = inequality_suite(16, SEED, 1000);
    assert_eq!(at_8.violations, 0, "criterion 11: hard inequality violations at K=8");
    assert_eq!(at_16.violations, 0, "criterion 11: hard inequality violations at K=16");
    let mut lines = Vec::new();
    let mut ok = true;
    for (r8, r16) in at_8.rows.iter().zip(&at_16.rows) {
        let ratio = r8.max_ratio / r16.max_ratio;
        let stable = (0.5..=2.0).contains(&ratio);
        ok &= stable;
        lines.push(format!(
            "{}: K=8 max {:.4e}, K=16 max {:.4e}, ratio {ratio:.3} ({})",
            r8.name,
            r8.max_ratio,
            r16.max_ratio,
            if stable { "stable" } else { "UNSTABLE" }
        ));
    }
    // Kernel-sum growth under cutoff doubling must stay sublinear.
    let sums = varsigma_sum_across_cutoffs(&[8, 16, 32], 1.0);
    let g1 = sums[1].1 / sums[0].1;
    let g2 = sums[2].1 / sums[1].1;
    ok &= g1 < 2.0 && g2 < 2.0;
    assert!(
        ok,
        "criterion 11 FAIL:\n{}\nkernel sums growth {g1:.3}, {g2:.3}",
        lines.join("\n")
    );
    println!(
        "criterion 11 PASS:\n  {}\n  kernel abs-sum growth under doubling: {g1:.3}, {g2:.3}",
        lines.join("\n  ")
    );
}

#[test]
fn chemical_potential_identity_on_the_converged_pair() {
    // Companion to criterion 1: the closed-form potential identity holds at
    // the uniform solution to the stated tolerance.
    let grid = arc_grid(8);
    let n0 = FieldSample::constant(&grid, 1.0);
    let opts = PenalizedSolveOptions::default();
    let (rho, a, _) = continuation_solve(&grid, &n0, 1.0, &opts).unwrap();
    let res = chemical_potential_residual(&rho, &a, 1.0).unwrap();
    assert!(res <= 1e-6, "identity residual {res:.3e}");
    let zero = DensityOperator::from_matrix(
        grid.clone(),
        DMatrix::<Complex64>::zeros(grid.dim(), grid.dim()),
    )
    .unwrap();
    assert_eq!(zero.entropy(), 0.0);
}
