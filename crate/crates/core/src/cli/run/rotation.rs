use anyhow::bail;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::Error;
use crate::measure;
use crate::report::Report;
use crate::rotation::level::{desk_threshold, eval_at, LevelSampling, Point};
use crate::rotation::params::{auto_indices, section7_params};
use crate::rotation::{
    build_level, check_level, rigid_time_report, squash_rotation_search, ContinuedFraction, LevelReport,
    PiecewisePoly, Profile, RotationLevel,
};

use super::super::{Cli, Outcome, RotationArgs};
use super::csv_bytes;

pub const RIGID_TOL: f64 = 1e-9;

/// Builds the levels named by `levels`, or the greedy choice.
pub fn build_levels(
    pq: &[u64],
    levels: Option<&Vec<usize>>,
    profile: Profile,
    p: usize,
) -> anyhow::Result<(ContinuedFraction, Vec<RotationLevel>)> {
    let cf = ContinuedFraction::new(pq.to_vec())?;
    let indices = match levels {
        Some(l) => l.clone(),
        None => auto_indices(&cf, profile),
    };
    if indices.is_empty() {
        bail!("no partial quotient is large enough for a level; pass --levels or enlarge the quotients");
    }
    let params = section7_params(&cf, &indices, profile, p)?;
    let built = params
        .levels
        .iter()
        .map(|lp| build_level(&cf, lp, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((cf, built))
}

fn level_checks(report: &mut Report, r: &LevelReport) {
    let k = r.k;
    let rows = [
        ("plateau", "bump plateau height equals d_k", &r.plateau),
        ("F sup", "sup |F_k| <= d_k e^k", &r.f_sup),
        ("F integral", "|integral of F_k| vanishes", &r.f_integral),
        ("block sums", "orbit sums of F_k over each block of ell_k q floors vanish", &r.block_sums),
        ("coboundary", "|F_k - (G_k - G_k o T)| on random points", &r.coboundary),
        ("telescoping", "orbit sums of F_k equal G_k(x) - G_k(T^n x)", &r.telescoping),
        ("transfer bound", "sup |G_k| <= ell_k q_(n_k - 1) sup |F_k|", &r.transfer_bound),
    ];
    for (name, display, v) in rows {
        report.check(format!("level {k} {name}"), display, v.measured, v.bound, v.pass);
    }
    let s = &r.smoothness;
    let worst = s.continuity.iter().copied().fold(s.plateau_edges, f64::max);
    report.check(
        format!("level {k} smoothness"),
        "relative derivative jumps of the bump up to order p",
        worst,
        s.tolerance,
        s.pass,
    );
}

fn table(f: &PiecewisePoly) -> anyhow::Result<Vec<u8>> {
    csv_bytes(|b| Ok(f.write_csv(b)?))
}

pub fn rotation(cli: &Cli, a: &RotationArgs, rng: &mut ChaCha8Rng) -> anyhow::Result<Outcome> {
    let profile: Profile = a.profile.into();
    let (cf, levels) = build_levels(&a.pq, a.levels.as_ref(), profile, a.p)?;
    let tol = cli.tolerance.unwrap_or(RIGID_TOL);
    let mut report = Report::new(
        "rotation",
        cli.seed,
        json!({
            "pq": a.pq,
            "levels": levels.iter().map(|l| l.params.n).collect::<Vec<_>>(),
            "p": a.p,
            "c": a.c,
            "profile": profile,
            "samples": a.samples,
            "tolerance": tol,
        }),
    );
    report.detail("q", cf.q(cf.depth()).to_string());
    report.detail("parameters", levels.iter().map(|l| &l.params).collect::<Vec<_>>());
    let decreasing = levels
        .windows(2)
        .all(|w| w[1].params.ln_d_bar + (w[1].params.k as f64) < w[0].params.ln_d_bar + (w[0].params.k as f64));
    report.check(
        "summability",
        "d_bar_k e^k strictly decreasing",
        levels.iter().map(|l| l.params.ln_d_bar + l.params.k as f64).collect::<Vec<_>>(),
        "decreasing",
        decreasing,
    );

    let sampling = LevelSampling {
        coboundary: a.samples,
        ..LevelSampling::default()
    };
    let mut level_reports = Vec::new();
    let mut rigid_reports = Vec::new();
    let mut tables = Vec::new();
    for level in &levels {
        let k = level.params.k;
        let r = check_level(level, sampling, rng);
        level_checks(&mut report, &r);
        let top = desk_threshold(level.params.ell_half).min(level.params.ell_half / k as u64);
        let indices: Vec<u64> = (1..=top).collect();
        if !indices.is_empty() {
            let f = |x: Point| eval_at(&level.f, x);
            let rigid = rigid_time_report(level, &indices, &f, tol)?;
            let err = rigid.rows.iter().map(|r| r.max_error).fold(0.0, f64::max);
            report.check(
                format!("level {k} rigid sums"),
                format!("orbit sums along i q_(n_k - 1), i <= {top}, match i q (1 + 1/c_k)^j d_k"),
                err,
                tol,
                rigid.rows.iter().all(|r| r.closed_form_pass),
            );
            let overlap = rigid.rows.iter().map(|r| r.overlap.clone()).min().unwrap_or_else(measure::one);
            report.check(
                format!("level {k} rigid overlap"),
                "lambda(E and T^-iq E) / lambda(E) > 9/10",
                measure::fraction_string(&overlap),
                "9/10",
                rigid.rows.iter().all(|r| r.overlap_pass),
            );
            rigid_reports.push(rigid);
        }
        if cli.out.is_some() {
            tables.push((format!("rotation_f_{k}.csv"), table(&level.f)?));
            tables.push((format!("rotation_g_{k}.csv"), table(&level.g)?));
            tables.push((format!("rotation_bump_{k}.csv"), table(&level.bump_on_circle)?));
        }
        level_reports.push(r);
    }
    report.detail("level_reports", &level_reports);
    report.detail("rigid_reports", &rigid_reports);

    let refs: Vec<&RotationLevel> = levels.iter().collect();
    match squash_rotation_search(&refs, a.c) {
        Ok(s) => {
            for sc in &s.scales {
                report.check(
                    format!("level {} scale gap", sc.k),
                    format!("|c - (-1)^j (1 + 1/c_k)^j| <= 2|c|/c_k with j = {}", sc.j),
                    sc.gap,
                    sc.gap_bound,
                    sc.gap_pass,
                );
            }
            for sel in &s.selected {
                report.check(
                    format!("level {} squash support", sel.k),
                    "lambda(G_k o sigma - lambda_k G_k != 0) < (3 + log|c|)/k",
                    measure::to_f64(&sel.support),
                    sel.support_bound,
                    sel.support_pass,
                );
                report.check(
                    format!("level {} squash shift", sel.k),
                    "sup |G_k o S - G_k o sigma(k)| < 2^(1-m)",
                    sel.term_shift,
                    sel.shift_bound,
                    sel.shift_pass,
                );
            }
            report.check(
                "squash terms",
                "per-level shift terms, scale terms and supports non-increasing",
                s.selected
                    .iter()
                    .map(|t| json!([t.term_shift, t.term_scale, measure::to_f64(&t.support)]))
                    .collect::<Vec<_>>(),
                "non-increasing",
                s.terms_decreasing,
            );
            report.detail("squash", &s);
        }
        Err(e @ Error::RecursionStalled { .. }) => {
            report.check("squash recursion", "some level admits a squash exponent", e.to_string(), "a level", false);
        }
        Err(e) => return Err(e.into()),
    }
    Ok(Outcome { report, tables })
}
