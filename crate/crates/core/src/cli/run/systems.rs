use anyhow::{bail, Context};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::evc::{check_evc_finite, odometer_level_partition, CyclicSystem, EvcCertificate, OdometerCocycle, Partition, Tabulated, Window};
use crate::maharam::{build_maharam, dilation_flow_check, maharam_form_residuals, NonsingularSystem};
use crate::measure;
use crate::report::Report;
use crate::rotation::level::{eval_at, Point};

use super::super::{Cli, EvcArgs, MaharamArgs, Outcome, SystemKind};
use super::odometer_system;
use super::rotation::build_levels;

/// Largest rotation lattice tabulated for a certificate.
pub const MAX_TABULATED: i64 = 1 << 24;

pub const MAHARAM_TOL: f64 = 1e-12;

fn certificate_checks(report: &mut Report, cert: &EvcCertificate) {
    report.check(
        "certificate",
        "mass of failed and uncovered cells <= allowed failure",
        measure::fraction_string(&cert.failure_mass),
        measure::fraction_string(&cert.allowed_failure),
        cert.pass,
    );
    report.detail("passing_cells", cert.passing_cells());
    report.detail("certificate", cert);
}

pub fn evc(cli: &Cli, a: &EvcArgs) -> anyhow::Result<Outcome> {
    let params = json!({
        "system": format!("{:?}", a.system).to_lowercase(),
        "mu": a.mu, "nu": a.nu, "pq": a.pq, "levels": a.levels, "p": a.p,
        "gamma": a.gamma, "eps": a.eps, "bound": a.bound, "depth": a.depth, "radius": a.radius,
    });
    let mut report = Report::new("evc", cli.seed, params);
    let cert = match a.system {
        SystemKind::Odometer => {
            let build = odometer_system(a.mu.as_ref(), a.nu.as_ref())?;
            let k = a.depth as usize;
            if k == 0 || k > build.levels.len() {
                bail!("--depth {k} must name a level in 1..={}", build.levels.len());
            }
            let sys = CyclicSystem::from_odometer(&build.spec)?;
            let partition = odometer_level_partition(&build, k)?;
            let phi = OdometerCocycle {
                spec: &build.spec,
                cocycle: &build.cocycle,
            };
            let gamma = a.gamma.unwrap_or(build.level(k).g);
            report.detail("gamma", gamma);
            check_evc_finite(&sys, &phi, Window::new(gamma, a.radius)?, a.eps, &partition, a.bound)?
        }
        SystemKind::Rotation => {
            let Some(pq) = &a.pq else {
                bail!("--system rotation needs --pq");
            };
            let (_, levels) = build_levels(pq, a.levels.as_ref(), a.profile.into(), a.p)?;
            let first = &levels[0];
            let (order, step) = (first.order(), first.step());
            if order > MAX_TABULATED {
                bail!("lattice of {order} points is too large to tabulate (limit {MAX_TABULATED})");
            }
            if a.depth == 0 || a.depth > order as u64 {
                bail!("--depth must lie in 1..={order}");
            }
            // Index i stands for the midpoint of the lattice cell at i P mod Q.
            let point = |i: u64| (i as i128 * step as i128).rem_euclid(order as i128) as i64;
            let values = (0..order as u64)
                .map(|i| levels.iter().map(|l| eval_at(&l.f, Point::at(point(i), 0.5))).sum())
                .collect();
            let phi = Tabulated::new(values)?;
            let sys = CyclicSystem::new(order as u64)?;
            let arcs = a.depth;
            let partition = Partition::from_fn(order as u64, |i| Some(point(i) as u64 * arcs / order as u64))?;
            let gamma = a
                .gamma
                .unwrap_or(first.q_prev as f64 * first.params.d);
            report.detail("gamma", gamma);
            check_evc_finite(&sys, &phi, Window::new(gamma, a.radius)?, a.eps, &partition, a.bound)?
        }
    };
    certificate_checks(&mut report, &cert);
    Ok(Outcome { report, tables: Vec::new() })
}

pub fn maharam(cli: &Cli, a: &MaharamArgs, rng: &mut ChaCha8Rng) -> anyhow::Result<Outcome> {
    let text = std::fs::read_to_string(&a.system).with_context(|| format!("reading {}", a.system.display()))?;
    let system: NonsingularSystem = serde_json::from_str(&text).context("parsing the system JSON")?;
    let prod = build_maharam(&system)?;
    let tol = cli.tolerance.unwrap_or(MAHARAM_TOL);
    let mut report = Report::new(
        "maharam",
        cli.seed,
        json!({"system": system, "t": a.t, "boxes": a.boxes, "tolerance": tol}),
    );
    let offsets: Vec<f64> = (0..system.states()).map(|w| prod.offset(w)).collect();
    let residual = maharam_form_residuals(&system, &offsets)?.into_iter().fold(0.0, f64::max);
    report.check(
        "fibre shifts",
        "fibre shift of every state equals -log of the mass ratio",
        residual,
        tol,
        residual <= tol,
    );
    let mut runs = Vec::new();
    for &t in &a.t {
        let boxes: Vec<_> = (0..a.boxes).map(|_| prod.random_box(rng)).collect();
        let s = rng.gen_range(-1.0..1.0);
        let r = dilation_flow_check(&prod, t, s, &boxes, tol)?;
        report.check(format!("t = {t} commutes"), "Q_t T = T Q_t, exactly", r.commutes, true, r.commutes);
        report.check(format!("t = {t} flow law"), "Q_(t+s) = Q_t Q_s, exactly", r.flow_law, true, r.flow_law);
        report.check(
            format!("t = {t} preservation"),
            "relative change of box mass under T",
            r.max_preservation_error,
            tol,
            r.max_preservation_error <= tol,
        );
        report.check(
            format!("t = {t} dilation"),
            "relative error of D(Q_t) against e^t",
            r.max_dilation_error.max(r.inverse_error),
            tol,
            r.max_dilation_error <= tol && r.inverse_error <= tol,
        );
        runs.push(r);
    }
    report.detail("flows", runs);
    Ok(Outcome { report, tables: Vec::new() })
}
