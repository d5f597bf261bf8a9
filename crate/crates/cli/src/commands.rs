//! Command implementations: each writes a CSV table, a JSON summary, and a
//! metadata file (timestamps live only in the metadata so repeated runs are
//! byte-identical).

use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crlab::barrier::{check_strong_barrier, find_adjusted_pair, Barrier, BarrierConfig};
use crlab::cech::mock::{MockDims, MockSpace};
use crlab::cech::{chi, homotopy, multi_indices, q2, rho as rho_op, Cochain, Cover, SectionSpace};
use crlab::deform::{exp_map, invert_map, pushforward_mu, DeformationForm};
use crlab::geometry::{certify_regular_q_pseudoconcave, levi_form, theta_samples};
use crlab::kernels::{bm_reproduce, t_volume, CFOperatorConfig, FormCoeffFn};
use crlab::nash_moser::{
    feasibility_scan, iterate, ledger_check, recurrence_simulate, LedgerConfig, ToyProblem,
};
use crlab::num::proportional_fit;

use crate::config::ExperimentConfig;

type NamedPoly = (&'static str, Box<dyn Fn(&[Complex64]) -> Complex64>);

pub struct RunContext {
    pub cfg: ExperimentConfig,
    pub out_dir: PathBuf,
    pub command: &'static str,
    pub threads: Option<usize>,
}

impl RunContext {
    fn seed(&self) -> u64 {
        self.cfg.seed.unwrap_or(7)
    }

    fn write_csv(&self, rows: &[String], header: &str) -> Result<()> {
        let path = self.out_dir.join(format!("{}.csv", self.command));
        let mut f = std::fs::File::create(&path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        writeln!(f, "{header}")?;
        for r in rows {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }

    fn write_summary(&self, summary: &serde_json::Value) -> Result<()> {
        let path = self.out_dir.join(format!("{}_summary.json", self.command));
        std::fs::write(&path, serde_json::to_string_pretty(summary)?)?;
        Ok(())
    }

    fn write_meta(&self, wall: f64) -> Result<()> {
        let path = self.out_dir.join(format!("{}_meta.json", self.command));
        let meta = json!({
            "command": self.command,
            "seed": self.seed(),
            "threads_requested": self.threads,
            "wall_seconds": wall,
            "unix_time": std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        });
        std::fs::write(&path, serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}

pub fn run(command: &str, ctx: &RunContext) -> Result<bool> {
    let start = Instant::now();
    let passed = match command {
        "levi-analyze" => levi_analyze(ctx)?,
        "barrier-check" => barrier_check(ctx)?,
        "kernel-test" => kernel_test(ctx)?,
        "homotopy-verify" => homotopy_verify(ctx)?,
        "cech-mock" => cech_mock(ctx)?,
        "deform-step" => deform_step(ctx)?,
        "iterate" => iterate_cmd(ctx)?,
        "ledger-sim" => ledger_sim(ctx)?,
        other => anyhow::bail!("unknown command {other}"),
    };
    ctx.write_meta(start.elapsed().as_secs_f64())?;
    Ok(passed)
}

fn levi_analyze(ctx: &RunContext) -> Result<bool> {
    let man = ctx.cfg.build_model()?;
    let p = &ctx.cfg.params;
    let thetas = theta_samples(man.m, p.theta_count);
    // z samples: grid corners plus center
    let zs: Vec<Vec<Complex64>> = man
        .grid
        .nodes()
        .step_by((man.grid.len() / 16).max(1))
        .map(|(_, u)| man.lift(&u))
        .collect();
    let mut rows = Vec::new();
    for (ti, theta) in thetas.iter().enumerate() {
        for (zi, z) in zs.iter().enumerate() {
            let levi = levi_form(&man, &man.rho, z, theta)?;
            let eig: Vec<String> = levi.eigenvalues.iter().map(|e| format!("{e:.6e}")).collect();
            rows.push(format!("{ti},{zi},{},{}", levi.negative_count, eig.join(",")));
        }
    }
    ctx.write_csv(&rows, "theta_index,z_index,negative_count,eigenvalues")?;
    let report = certify_regular_q_pseudoconcave(&man, &man.rho, p.q, &thetas, &zs, 10.0)?;
    let passed = report.passed();
    ctx.write_summary(&json!({
        "q": p.q,
        "samples": report.samples,
        "failures": report.failures.len(),
        "min_negative_count": report.min_negative_count,
        "max_principal_angle_deg": report.max_principal_angle_deg,
        "certified": passed,
    }))?;
    Ok(passed)
}

fn barrier_check(ctx: &RunContext) -> Result<bool> {
    let man = ctx.cfg.build_model()?;
    let p = &ctx.cfg.params;
    let thetas = theta_samples(man.m, p.theta_count);
    let z0 = man.lift(&vec![0.0; man.graph_dim()]);
    let barrier = Barrier::build(
        &man,
        &man.rho.clone(),
        p.q,
        &thetas,
        &[z0],
        BarrierConfig { kohn_weight: p.kohn_weight, kappa_sq: p.kappa_sq, ..Default::default() },
    )?;
    let rep = check_strong_barrier(&barrier, &man, p.samples, p.shell_max, p.c_min, ctx.seed())?;
    let pair =
        find_adjusted_pair(&barrier, &man, &vec![0.0; man.graph_dim()], p.outer_radius, p.samples.min(4000), ctx.seed());
    let (r_in, c_cert, pair_ok) = match &pair {
        Ok(pr) => (pr.inner_radius, pr.certified_c, true),
        Err(_) => (f64::NAN, f64::NAN, false),
    };
    let rows = vec![format!(
        "{},{},{:.6e},{:.6e},{:.4},{:.4}",
        ctx.cfg.model.kind, rep.samples, rep.c_est, c_cert, r_in, p.outer_radius
    )];
    ctx.write_csv(&rows, "model,sample_count,c_est,c,r,outer_radius")?;
    let passed = rep.passed && pair_ok;
    ctx.write_summary(&json!({
        "c_est": rep.c_est,
        "c_min": rep.c_min,
        "ratio_passed": rep.passed,
        "adjusted_pair_found": pair_ok,
        "inner_radius": r_in,
        "certified_c": c_cert,
    }))?;
    Ok(passed)
}

fn kernel_test(ctx: &RunContext) -> Result<bool> {
    let man = ctx.cfg.build_model()?;
    let p = &ctx.cfg.params;
    let q = p.q;
    let thetas = theta_samples(man.m, p.theta_count);
    let z0 = man.lift(&vec![0.0; man.graph_dim()]);
    let barrier = Barrier::build(&man, &man.rho.clone(), q, &thetas, &[z0], BarrierConfig::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
    let gd = man.graph_dim();
    let mut rows = Vec::new();
    let mut worst_low: f64 = 0.0;
    let trials = p.trials.max(1);
    for i in 0..trials {
        let uz: Vec<f64> =
            (0..gd).map(|d| rng.gen_range(man.grid.lo[d] * 0.75..man.grid.hi[d] * 0.75)).collect();
        let uw: Vec<f64> =
            (0..gd).map(|d| rng.gen_range(man.grid.lo[d] * 0.75..man.grid.hi[d] * 0.75)).collect();
        let off = if rng.gen_bool(0.5) { 0.02 } else { -0.02 };
        let zeta = man.lift_with_rho(&uz, &[off]);
        let z = man.lift(&uw);
        let mut cols = Vec::new();
        for r in 0..q {
            let v = barrier.omega_prime_scaled(r, &zeta, &z).max_coeff();
            worst_low = worst_low.max(v);
            cols.push(format!("{v:.6e}"));
        }
        let at_q = barrier.omega_prime_scaled(q, &zeta, &z).max_coeff();
        rows.push(format!("{i},{},{at_q:.6e}", cols.join(",")));
    }
    let header_cols: Vec<String> = (0..q).map(|r| format!("max_coeff_r{r}")).collect();
    ctx.write_csv(&rows, &format!("sample,{},max_coeff_r{q}", header_cols.join(",")))?;
    let passed = worst_low <= 1e-10;
    ctx.write_summary(&json!({
        "q": q,
        "trials": trials,
        "max_low_degree_coeff": worst_low,
        "vanishing_passed": passed,
    }))?;
    Ok(passed)
}

fn homotopy_verify(ctx: &RunContext) -> Result<bool> {
    let p = &ctx.cfg.params;
    // reproducing experiment on the ball in C^2
    let center = vec![Complex64::new(0.0, 0.0); 2];
    let polys: Vec<NamedPoly> = vec![
        ("1", Box::new(|_z: &[Complex64]| Complex64::new(1.0, 0.0))),
        ("z1", Box::new(|z: &[Complex64]| z[0])),
        ("z1*z2", Box::new(|z: &[Complex64]| z[0] * z[1])),
    ];
    let test_points = [
        [Complex64::new(0.2, -0.1), Complex64::new(-0.15, 0.25)],
        [Complex64::new(0.1, 0.3), Complex64::new(-0.2, -0.2)],
    ];
    let mut rows = Vec::new();
    let mut worst_rep: f64 = 0.0;
    for (name, g) in &polys {
        for (pi, z) in test_points.iter().enumerate() {
            let t = Instant::now();
            let got = bm_reproduce(g.as_ref(), &center, 1.0, z, 12, 24);
            let want = g(z);
            let rel = (got - want).norm() / want.norm().max(0.25);
            worst_rep = worst_rep.max(rel);
            rows.push(format!(
                "reproduce,{name},{pi},{rel:.4e},{},{:.3}",
                12 * 24 * 24,
                t.elapsed().as_secs_f64()
            ));
        }
    }
    // tube decay experiment
    let man = Arc::new(crlab::geometry::GraphManifold::hyperplane(2, 1, 0.6, 3));
    let man2 = man.clone();
    let g: FormCoeffFn = Arc::new(move |zeta: &[Complex64]| {
        let u = man2.base_coords(zeta);
        let n2: f64 = u.iter().map(|x| x * x).sum();
        vec![(vec![2u8], Complex64::new((-12.0 * n2).exp(), 0.0))]
    });
    let cfg = CFOperatorConfig {
        excl_radius: p.excl_radius,
        radial_segments: p.radial_segments,
        sphere_nodes: p.sphere_nodes,
        outer_radius: 0.55,
        seed: ctx.seed(),
        ..Default::default()
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut eps = 0.1;
    for _ in 0..6 {
        let t = Instant::now();
        let v = t_volume(&man, &g, 1, &[0.03, 0.01, -0.02], eps, &cfg)?;
        let mag = v.max_coeff();
        rows.push(format!(
            "t_decay,eps={eps:.5},0,{mag:.4e},{},{:.3}",
            cfg.radial_segments * 3 * cfg.sphere_nodes * 4 * 2,
            t.elapsed().as_secs_f64()
        ));
        xs.push(eps * (1.0 / eps).ln());
        ys.push(mag);
        eps /= 2.0;
    }
    let (kfit, r2) = proportional_fit(&xs, &ys);
    ctx.write_csv(&rows, "experiment,case,point,value_or_residual,node_count,wall_seconds")?;
    let passed = worst_rep <= 0.01 && r2 >= 0.95;
    ctx.write_summary(&json!({
        "reproducing_max_rel_error": worst_rep,
        "decay_fit_k": kfit,
        "decay_fit_r2": r2,
        "passed": passed,
    }))?;
    Ok(passed)
}

fn cech_mock(ctx: &RunContext) -> Result<bool> {
    let p = &ctx.cfg.params;
    let space = MockSpace::with_sets(MockDims::default(), p.mock_sets, ctx.seed());
    let weights: Vec<f64> = {
        let raw: Vec<f64> = (1..=p.mock_sets).map(|i| i as f64).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    };
    let cover = Cover::with_weights(weights, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed() + 1);
    std::fs::write(ctx.out_dir.join("mock_complex.txt"), space.to_text())?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for trial in 0..p.trials {
        // rho-chi and q2 on random coboundaries
        let mut beta = Cochain::new(1, 0);
        for idx in multi_indices(cover.n_sets, 2) {
            beta.insert(idx, space.random_cr_section(&mut rng));
        }
        let alpha = rho_op(&space, &cover, &beta);
        let alpha_norm =
            alpha.entries.values().map(|v| space.norm(v)).fold(0.0, f64::max);
        let q = q2(&space, &cover, &alpha).map_err(|e| anyhow::anyhow!("{e}"))?;
        let q_norm = q.entries.values().map(|v| space.norm(v)).fold(0.0, f64::max);
        let back = rho_op(&space, &cover, &q);
        let mut defect: f64 = 0.0;
        for (idx, v) in &alpha.entries {
            let d = space.add_scaled(&back.entries[idx], v, Complex64::new(-1.0, 0.0));
            defect = defect.max(space.norm(&d));
        }
        let h = space.random_value(1, &mut rng);
        let hom = homotopy(&space, &cover, &h).map_err(|e| anyhow::anyhow!("{e}"))?;
        let chi_defect = {
            let split = chi(&space, &cover, &alpha);
            let b2 = rho_op(&space, &cover, &split);
            let mut d: f64 = 0.0;
            for (idx, v) in &alpha.entries {
                let diff = space.add_scaled(&b2.entries[idx], v, Complex64::new(-1.0, 0.0));
                d = d.max(space.norm(&diff));
            }
            d
        };
        worst = worst.max(defect).max(hom.identity_residual).max(chi_defect);
        rows.push(format!(
            "{trial},{alpha_norm:.3e},{q_norm:.3e},{:.3e},{:.3e},{defect:.3e},{chi_defect:.3e},{:.3e}",
            space.norm(&hom.p_of_h),
            space.norm(&hom.q_of_dh),
            hom.identity_residual
        ));
    }
    ctx.write_csv(
        &rows,
        "trial,alpha_norm,q2_norm,p_norm,q_norm,q2_split_defect,rho_chi_defect,homotopy_residual",
    )?;
    let passed = worst <= p.tolerance;
    ctx.write_summary(&json!({
        "trials": p.trials,
        "worst_defect": worst,
        "tolerance": p.tolerance,
        "passed": passed,
    }))?;
    Ok(passed)
}

fn deform_step(ctx: &RunContext) -> Result<bool> {
    let man = ctx.cfg.build_model()?;
    let p = &ctx.cfg.params;
    anyhow::ensure!(man.m == 1 && man.n == 3, "deform-step ships on the C^3 hypersurface models");
    let rho = man.rho.clone();
    let mut rows = Vec::new();
    let mut amps = Vec::new();
    let mut norms = Vec::new();
    for rung in 0..p.rungs {
        let amp = p.base_amplitude / (1 << rung) as f64;
        let man2 = man.clone();
        let fmap = exp_map(3, move |z: &[Complex64]| {
            let u = man2.base_coords(z);
            let z2 = Complex64::new(u[1], u[2]);
            let z3 = Complex64::new(u[3], u[4]);
            vec![
                amp * (z2.conj() * z3 + Complex64::new(0.3 * u[0], 0.1)),
                amp * (z3.conj() + 0.5 * z2 * z2.conj()),
                amp * (z2 + Complex64::new(0.0, 0.2) * z3.conj() * z3),
            ]
        });
        let mu = DeformationForm::from_dbar_of_map(&man, &rho, &fmap)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let fmap = invert_map(&fmap, 0.2).map_err(|e| anyhow::anyhow!("{e}"))?;
        let push = pushforward_mu(&man, &rho, &mu, &fmap).map_err(|e| anyhow::anyhow!("{e}"))?;
        rows.push(format!("{rung},{amp:.5e},{:.5e},{:.5e}", mu.max_abs(), push.mu_star.max_abs()));
        amps.push(amp.ln());
        norms.push(push.mu_star.max_abs().ln());
        if rung + 1 == p.rungs {
            std::fs::write(ctx.out_dir.join("mu_star.txt"), push.mu_star.to_text(&man))?;
        }
    }
    ctx.write_csv(&rows, "rung,amplitude,mu_norm,mu_star_norm")?;
    let slope = crlab::num::linear_fit(&amps, &norms).1;
    let passed = (1.7..=2.3).contains(&slope);
    ctx.write_summary(&json!({"rungs": p.rungs, "slope": slope, "passed": passed}))?;
    Ok(passed)
}

fn iterate_cmd(ctx: &RunContext) -> Result<bool> {
    let p = &ctx.cfg.params;
    let cfg = LedgerConfig {
        k: p.k,
        s: p.s,
        c_const: p.c_const,
        p_degree: p.p_degree,
        t0: p.t0,
        eps: p.eps.unwrap_or_else(|| LedgerConfig::default_eps(p.t0)),
        max_iterations: p.max_iterations,
        target_delta: p.target_delta,
    };
    let mut toy = ToyProblem::new(p.grid, p.coupling);
    let mu0 = toy.single_mode(1, p.delta0);
    let t = Instant::now();
    let out = iterate(&mut toy, mu0, &cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
    let wall = t.elapsed().as_secs_f64();
    let report = ledger_check(&cfg, &out.rows);
    let mut rows = Vec::new();
    for r in &out.rows {
        rows.push(format!(
            "{},{:.6e},{:.6e},{:.6e},{:.6e},{},{},{},{:.3}",
            r.j,
            r.cutoff,
            r.theta,
            r.delta,
            r.delta_s,
            r.flag_rho,
            r.flag_delta,
            r.flag_high,
            wall / out.rows.len() as f64
        ));
    }
    ctx.write_csv(&rows, "j,t_j,theta_j,delta_j,delta_j_s,flag_rho,flag_delta,flag_high,wall_seconds")?;
    let passed = out.converged && report.all_green;
    ctx.write_summary(&json!({
        "converged": out.converged,
        "iterations": out.rows.len(),
        "final_delta": out.rows.last().map(|r| r.delta),
        "ledger_green": report.all_green,
        "recurrence_bounds_valid": report.recurrence_bounds_valid,
    }))?;
    Ok(passed)
}

fn ledger_sim(ctx: &RunContext) -> Result<bool> {
    let p = &ctx.cfg.params;
    let base = LedgerConfig {
        k: p.k,
        s: p.s,
        c_const: p.c_const,
        p_degree: p.p_degree,
        t0: p.t0,
        eps: p.eps.unwrap_or(1e-8),
        max_iterations: 0,
        target_delta: 0.0,
    };
    base.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    let scan = feasibility_scan(&base, &p.cutoffs, p.horizon);
    let feasible = scan.iter().all(|(_, e)| e.is_some());
    let mut rows = Vec::new();
    for (t0, eps) in &scan {
        let label = eps.map(|e| format!("{e:.6e}")).unwrap_or_else(|| "none".into());
        rows.push(format!("scan,{t0},{label},,,"));
    }
    // one full rollout at the first feasible point for the record
    if let Some((t0, Some(eps))) = scan.iter().find(|(_, e)| e.is_some()) {
        let sim = recurrence_simulate(&LedgerConfig { t0: *t0, eps: *eps, ..base.clone() }, eps * 0.99, p.horizon);
        for r in &sim.rows {
            rows.push(format!(
                "rollout,{},{:.4e},{:.4e},{:.4e},{}",
                r.j, r.delta, r.delta_s, r.rho_s, r.green
            ));
        }
        ctx.write_summary(&json!({
            "feasible": feasible,
            "t0": base.t0,
            "scan": scan.iter().map(|(t, e)| json!({"t0": t, "max_eps": e})).collect::<Vec<_>>(),
            "decay_exponent": sim.decay_exponent,
        }))?;
    } else {
        ctx.write_summary(&json!({"feasible": feasible, "t0": base.t0}))?;
    }
    ctx.write_csv(&rows, "kind,index_or_t0,value1,value2,value3,green")?;
    Ok(feasible)
}
