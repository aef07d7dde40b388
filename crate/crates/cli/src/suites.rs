use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use codazzi::cone::{
    cone_angle_measure, cone_harmonic_at, cone_l2_norm, cone_tip_sup, develop, hyperbolic_polar_metric, peripheral_potential,
    singular_embedding, wedge_sweep, ConeAngle,
};
use codazzi::embedding::{
    immersion_geometry, immersion_holonomy, normal_flow, normal_flow_gap, reconstruct_immersion, reconstruction_summary,
    rescaled_metric_gap,
};
use codazzi::fields::{hess_minus_id_at, tangent_identity, trace_jbb, traceless, KleinChart, LinearPotential, OperatorField};
use codazzi::holonomy::{cocycle_basis, coboundary_cocycle, holonomy_variation, twist_family, SurfaceGroup, RELATOR_TOL};
use codazzi::mink::{
    box_product, det3, distance, exp_lambda, exp_map, isometry_defect, lambda_inverse, lambda_iso, mink_dot, polar_point,
    MinkVec,
};
use codazzi::pairing::{basis_pairing, goldman_wp_report, octagon_quadrature, resolution_for, sample_nodes, trivial_nodes};
use codazzi::random::FieldRng;
use codazzi::tensors::{delta_extract, equivariant_generator, harmonic_tensor_at, iota_star_form, BumpPotential, DiscChart, QuadDiffLocal};
use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::SuiteConfig;
use crate::report::{Check, PairingTables, Profile, RatioRow, Report, Section};
use crate::CliError;

type SuiteResult = Result<Section, Box<dyn std::error::Error + Send + Sync>>;

/// Bounds fixed by the identities themselves rather than by configuration.
const RELATOR_BOUND: f64 = RELATOR_TOL;
const AREA_BOUND: f64 = 1e-4;
const HOLONOMY_BOUND: f64 = 1e-6;
const FLOW_BOUND: f64 = 1e-6;
const ROUND_TRIP_BOUND: f64 = 1e-3;
const POINTWISE_BOUND: f64 = 1e-10;
const WEDGE_TRACE_BOUND: f64 = 1e-8;
const TRIVIAL_BOUND: f64 = 1e-6;
const PERIPHERAL_BOUND: f64 = 1e-6;
const ANGLE_BOUND: f64 = 1e-2;
const WEDGE_RELATION_BOUND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Core,
    Holonomy,
    Codazzi,
    Embedding,
    Cone,
    Pairing,
    All,
}

impl Suite {
    pub const EACH: [Suite; 6] = [Suite::Core, Suite::Holonomy, Suite::Codazzi, Suite::Embedding, Suite::Cone, Suite::Pairing];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Core => "core",
            Suite::Holonomy => "holonomy",
            Suite::Codazzi => "codazzi",
            Suite::Embedding => "embedding",
            Suite::Cone => "cone",
            Suite::Pairing => "pairing",
            Suite::All => "all",
        }
    }

    fn run(self, cfg: &SuiteConfig) -> Section {
        let out = match self {
            Suite::Core => core(cfg),
            Suite::Holonomy => holonomy(cfg),
            Suite::Codazzi => codazzi(cfg),
            Suite::Embedding => embedding(cfg),
            Suite::Cone => cone(cfg),
            Suite::Pairing => pairing(cfg),
            Suite::All => unreachable!("expanded before running"),
        };
        out.unwrap_or_else(|e| Section { checks: vec![Check::error(format!("{}.error", self.name()), e)], ..Default::default() })
    }
}

impl FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Suite::EACH.into_iter().chain([Suite::All]).find(|x| x.name() == s).ok_or_else(|| CliError::UnknownSuite(s.to_string()))
    }
}

/// Runs the named suites concurrently and merges their sections in the
/// canonical suite order. An empty list gives an empty report.
pub fn run_suites(names: &[Suite], cfg: &SuiteConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let mut todo: Vec<Suite> = if names.contains(&Suite::All) { Suite::EACH.to_vec() } else { names.to_vec() };
    todo.sort();
    todo.dedup();
    let label = if names.contains(&Suite::All) { "all".to_string() } else { todo.iter().map(|s| s.name()).collect::<Vec<_>>().join("+") };
    let sections: Vec<Section> = std::thread::scope(|scope| {
        let handles: Vec<_> = todo.iter().map(|s| scope.spawn(move || s.run(cfg))).collect();
        handles.into_iter().map(|h| h.join().expect("suite thread panicked")).collect()
    });
    let mut report = Report::new(label, cfg.clone());
    for s in sections {
        report.merge(s);
    }
    Ok(report)
}

pub fn run_suite(name: Suite, cfg: &SuiteConfig) -> Result<Report, CliError> {
    run_suites(&[name], cfg)
}

fn ratio_check(id: &str, identity: &str, coarse: f64, fine: f64) -> Check {
    let w = codazzi::fields::RICHARDSON_WINDOW;
    let mid = 0.5 * (w.start() + w.end());
    Check::within(id, identity, coarse / fine, mid, 0.5 * (w.end() - w.start()))
}

fn core(cfg: &SuiteConfig) -> SuiteResult {
    let mut rng = FieldRng::new(cfg.seed);
    let tol = cfg.tol_alg;
    let basis = [MinkVec::e1(), MinkVec::e2(), MinkVec::e3()];
    let mut trace: f64 = 0.0;
    for a in basis {
        for b in basis {
            trace = trace.max(((lambda_iso(a) * lambda_iso(b)).trace() - 2.0 * mink_dot(a, b)).abs());
        }
    }
    let (mut det, mut inv, mut act, mut iso, mut exp) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..32 {
        let (u, v, w) = (rng.vector(2.0), rng.vector(2.0), rng.vector(2.0));
        let scale = u.max_abs() * v.max_abs() * w.max_abs();
        det = det.max((mink_dot(box_product(u, v), w) - det3(u, v, w)).abs() / scale);
        inv = inv.max((lambda_inverse(&lambda_iso(u))? - u).max_abs() / u.max_abs());
        act = act.max((lambda_iso(u) * v - box_product(u, v)).max_abs() / (u.max_abs() * v.max_abs()));
        let m = exp_lambda(u * 0.5);
        iso = iso.max(isometry_defect(&m) / m.abs().max().powi(2));
        let x = polar_point(rng.uniform(0.0, 2.0), rng.uniform(0.0, TAU));
        let t = v - x * (-mink_dot(v, x));
        let y = exp_map(x, t);
        exp = exp.max((distance(x, y) - mink_dot(t, t).sqrt()).abs() / (1.0 + y.z));
    }
    Ok(Section {
        checks: vec![
            Check::at_most("core.lambda_trace", "tr(Λ(t)Λ(s)) = 2<t, s> on the basis", trace, tol),
            Check::at_most("core.box_product", "<u ⊠ v, w> = det(u, v, w)", det, tol),
            Check::at_most("core.lambda_action", "Λ(t) v = t ⊠ v", act, tol),
            Check::at_most("core.lambda_inverse", "Λ⁻¹(Λ(t)) = t", inv, tol),
            Check::at_most("core.exp_isometry", "exp(Λ(t)) preserves the Minkowski form", iso, tol),
            Check::at_most("core.exp_distance", "d(x, exp_x(v)) = |v|", exp, 1e3 * tol),
        ],
        ..Default::default()
    })
}

fn holonomy(cfg: &SuiteConfig) -> SuiteResult {
    let g = SurfaceGroup::build_genus2_octagon()?;
    let basis = cocycle_basis(&g.rep)?;
    let (z, b, h) = basis.dims();
    let area = g.area(resolution_for(cfg.grid / 2.0))?;
    let relator = basis.z1.iter().map(|t| t.relator_residual(&g.rep) / t.max_abs().max(1.0)).fold(0.0, f64::max);
    let mut rng = FieldRng::new(cfg.seed);
    let cob = coboundary_cocycle(rng.vector(1.0), &g.rep);
    let family = |s: f64| twist_family(&g.rep, s + 0.3 * s * s);
    let v1 = holonomy_variation(family, 2e-2)?;
    let v2 = holonomy_variation(family, 1e-2)?;
    Ok(Section {
        checks: vec![
            Check::at_most("holonomy.relator", "[a1, b1][a2, b2] = Id", g.relator_defect(), RELATOR_BOUND),
            Check::within("holonomy.area", "area of the octagon = 4π", area, 4.0 * PI, AREA_BOUND),
            Check::within("holonomy.dim_z1", "dim Z¹ = 9", z as f64, 9.0, 0.0),
            Check::within("holonomy.dim_b1", "dim B¹ = 3", b as f64, 3.0, 0.0),
            Check::within("holonomy.dim_h1", "dim H¹ = 6", h as f64, 6.0, 0.0),
            Check::at_most("holonomy.cocycle_relator", "Z¹ basis satisfies the relator constraint", relator, 1e2 * RELATOR_BOUND),
            Check::at_most("holonomy.coboundary_class", "coboundaries vanish in H¹", basis.h1_norm(&cob), 1e2 * RELATOR_BOUND),
            ratio_check("holonomy.variation_order", "Ad-cocycle residual of the variation is O(h²)", v1.cocycle_residual, v2.cocycle_residual),
        ],
        ..Default::default()
    })
}

fn random_codazzi(rng: &mut FieldRng) -> impl Fn(MinkVec) -> Matrix3<f64> {
    let u = rng.klein_polynomial(4, 0.5);
    let q = rng.quad_diff(3, 0.3);
    let disc = DiscChart::standard();
    move |x| hess_minus_id_at(&u, x) + harmonic_tensor_at(&q, &disc, x)
}

fn codazzi(cfg: &SuiteConfig) -> SuiteResult {
    let base = polar_point(0.2, 0.3);
    let coarse = KleinChart::build(base, cfg.grid, cfg.margin)?;
    let fine = KleinChart::build(base, cfg.grid / 2.0, cfg.margin)?;
    let mut rng = FieldRng::new(cfg.seed);
    let t = rng.vector(2.0);
    let kernel = |c: &KleinChart| -> Result<f64, codazzi::fields::FieldError> {
        let b = c.hess_minus_id_covariant(&c.sample_potential(&LinearPotential(t)))?;
        Ok(c.max_within(&b.values.iter().map(|m| m.norm()).collect::<Vec<_>>(), 2, 0.7))
    };
    let f = random_codazzi(&mut rng);
    let closure = |c: &KleinChart, b: &OperatorField| -> Result<f64, codazzi::tensors::TensorError> {
        let form = iota_star_form(c, b)?;
        Ok(c.max_within(&form.closedness.values, form.min_layer.max(2), 0.7))
    };
    let (c1, c2) = (closure(&coarse, &coarse.sample_operator(&f))?, closure(&fine, &fine.sample_operator(&f))?);
    let skew = OperatorField { values: fine.sample_operator(&f).values.iter().map(|m| m + codazzi::fields::J * 0.3).collect(), min_layer: 0 };
    let detect = closure(&fine, &skew)?;
    let tol = codazzi::fields::fd_tolerance(fine.spacing());
    let curvature = |c: &KleinChart| {
        let k: Vec<f64> = c.gauss_curvature().values.iter().map(|x| x + 1.0).collect();
        c.max_within(&k, 2, 0.7)
    };
    // pointwise algebra of harmonic tensors
    let q = rng.quad_diff(3, 1.0);
    let disc = DiscChart::standard();
    let mut alg: f64 = 0.0;
    for _ in 0..16 {
        let x = polar_point(rng.uniform(0.0, 1.5), rng.uniform(0.0, TAU));
        let bq = harmonic_tensor_at(&q, &disc, x);
        let scale = 1.0 + bq.abs().max();
        alg = alg.max((traceless(x, &bq) - bq).abs().max() / scale);
    }
    let g = SurfaceGroup::build_genus2_octagon()?;
    let basis = cocycle_basis(&g.rep)?;
    let (u, _) = equivariant_generator(&basis.h1[0], &g, 3.0)?;
    let field = |x: MinkVec| hess_minus_id_at(&u, x);
    let ex = delta_extract(&field, &g, 12, 1e-8)?;
    let delta_gap = basis.h1_norm(&ex.cocycle.add(&basis.h1[0].scale(-1.0)));
    Ok(Section {
        checks: vec![
            ratio_check("codazzi.kernel_order", "Hess v − v Id = 0 for v = <t, x>, O(Δ²)", kernel(&coarse)?, kernel(&fine)?),
            ratio_check("codazzi.closure_order", "d^D(ι_* b) = 0 for Codazzi b, O(Δ²)", c1, c2),
            Check::at_least("codazzi.detects_non_codazzi", "a skew part makes ι_* b non-closed (in units of the FD tolerance)", detect / tol, 10.0),
            ratio_check("codazzi.curvature_order", "Gauss curvature of the Klein chart = −1, O(Δ²)", curvature(&coarse), curvature(&fine)),
            Check::at_most("codazzi.harmonic_traceless", "harmonic tensors are traceless", alg, cfg.tol_alg * 1e2),
            Check::at_most("codazzi.delta_generator", "δ of the equivariant generator of a class is that class", delta_gap, HOLONOMY_BOUND),
        ],
        ..Default::default()
    })
}

fn embedding(cfg: &SuiteConfig) -> SuiteResult {
    let coarse = KleinChart::build(MinkVec::e3(), cfg.grid, cfg.margin)?;
    let fine = KleinChart::build(MinkVec::e3(), cfg.grid / 2.0, cfg.margin)?;
    let mut rng = FieldRng::new(cfg.seed);
    let u = rng.positive_potential(4, 1.0, 1.0 - cfg.margin);
    let run = |c: &KleinChart| reconstruction_summary(c, &c.sample_operator(|x| hess_minus_id_at(&u, x)), 1e-3, 0.7).map(|r| r.0);
    let (a, b) = (run(&coarse)?, run(&fine)?);
    let field = fine.sample_operator(|x| hess_minus_id_at(&u, x));
    let base = reconstruct_immersion(&fine, &field, 1e-3)?.immersion;
    let one = normal_flow(&fine, &field, 1.0, 1e-3)?;
    let mut gaps = Vec::new();
    for t in [10.0, 20.0, 40.0] {
        let f = normal_flow(&fine, &field, t, 1e-1)?;
        gaps.push(rescaled_metric_gap(&fine, &immersion_geometry(&fine, &f)?.data, t));
    }
    let g = SurfaceGroup::build_genus2_octagon()?;
    let basis = cocycle_basis(&g.rep)?;
    let mut hol_gap: f64 = 0.0;
    for t in &basis.h1 {
        let (u, _) = equivariant_generator(t, &g, 3.0)?;
        let field = move |x: MinkVec| hess_minus_id_at(&u, x) + tangent_identity(x) * 25.0;
        let hol = immersion_holonomy(&field, &g, 12, 1e-8)?;
        let delta = delta_extract(&field, &g, 12, 1e-8)?;
        for (p, q) in hol.translations().values.iter().zip(delta.cocycle.values) {
            hol_gap = hol_gap.max((*p - q).max_abs());
        }
    }
    Ok(Section {
        checks: vec![
            Check::at_most("embedding.metric_round_trip", "first fundamental form of σ = h(b·, b·)", b.metric_error, ROUND_TRIP_BOUND),
            Check::at_most("embedding.shape_round_trip", "shape operator of σ = b⁻¹", b.shape_error, ROUND_TRIP_BOUND),
            ratio_check("embedding.gauss_order", "det s + K_I = 0, O(Δ²)", a.gauss_residual, b.gauss_residual),
            ratio_check("embedding.third_form_order", "third fundamental form of σ = h, O(Δ²)", a.third_form_error, b.third_form_error),
            Check::at_most("embedding.normal_flow", "σ_t = σ + t G for b + t Id", normal_flow_gap(&base, &one, 1.0), FLOW_BOUND),
            Check::at_least("embedding.normal_flow_rescaled", "|I_t/t² − h| decreases along t = 10, 20, 40 (smallest step ratio)", (gaps[0] / gaps[1]).min(gaps[1] / gaps[2]), 1.0),
            Check::at_most("embedding.holonomy_translation", "translation part of the holonomy of σ = δb", hol_gap, HOLONOMY_BOUND),
        ],
        ..Default::default()
    })
}

fn pole(order: i32) -> QuadDiffLocal {
    QuadDiffLocal::monomial(order, Complex64::new(0.7, 0.3))
}

fn cone(cfg: &SuiteConfig) -> SuiteResult {
    let eps = cfg.eps_tip;
    let ladder = [eps * 100.0, eps * 10.0, eps];
    let mut checks = Vec::new();
    let mut profiles = Vec::new();
    for (theta, order) in [(TAU / 3.0, -1), (PI, -1), (1.5 * PI, 0)] {
        let a = ConeAngle::new(theta)?;
        let tag = format!("{:.4}", a.theta());
        let l2: Vec<f64> = ladder.iter().chain([&(eps / 10.0)]).map(|&e| cone_l2_norm(&pole(-1), a, e, 1.0)).collect();
        let d2: Vec<f64> = ladder.iter().map(|&e| cone_l2_norm(&pole(-2), a, e, 1.0)).collect();
        checks.push(Check::at_most(format!("cone.l2_stable.{tag}"), "simple-pole L² norm is stable under tip refinement (relative drift)", (l2[3] - l2[2]).abs() / l2[3], cfg.tol_global));
        checks.push(Check::at_least(format!("cone.l2_diverges.{tag}"), "double-pole L² norm grows under tip refinement (smallest step ratio)", (d2[1] / d2[0]).min(d2[2] / d2[1]), 10.0));
        profiles.push(Profile {
            name: format!("cone_l2_{tag}"),
            columns: vec!["eps".into(), "l2_simple".into(), "l2_double".into()],
            rows: ladder.iter().zip(l2.iter().zip(&d2)).map(|(e, (s, d))| vec![*e, *s, *d]).collect(),
        });
        if a.theta() < PI {
            let sups: Vec<f64> = ladder.iter().map(|&e| cone_tip_sup(&pole(-1), a, e)).collect();
            checks.push(Check::at_least(format!("cone.tip_vanishes.{tag}"), "sup |b_q| near the tip decreases with ε (smallest step ratio)", (sups[0] / sups[1]).min(sups[1] / sups[2]), 1.0));
            profiles.push(Profile { name: format!("cone_tip_sup_{tag}"), columns: vec!["eps".into(), "sup".into()], rows: ladder.iter().zip(&sups).map(|(e, s)| vec![*e, *s]).collect() });
        }
        let q = pole(-1);
        let field = move |r: f64, phi: f64| cone_harmonic_at(&q, a, r, phi);
        let rep = peripheral_potential(a, &field, a.harmonic_exponent(-1), PERIPHERAL_BOUND)?;
        checks.push(Check::at_most(format!("cone.peripheral_defect.{tag}"), "peripheral translation is trivial", rep.defect, PERIPHERAL_BOUND));
        if let Some(fit) = rep.decay {
            checks.push(Check::within(format!("cone.peripheral_decay.{tag}"), "∫_{c_r} du decays at the predicted rate", fit.exponent, rep.predicted_decay, 0.1 * rep.predicted_decay));
        }
        profiles.push(Profile { name: format!("cone_peripheral_{tag}"), columns: vec!["r".into(), "circle_integral".into()], rows: rep.circle_integrals.iter().map(|(r, v)| vec![*r, *v]).collect() });
        let h = cone_angle_measure(&hyperbolic_polar_metric(a), 1e-3, 1e-2)?;
        checks.push(Check::within(format!("cone.model_angle.{tag}"), "measured cone angle of the model metric", h.theta, a.theta(), ANGLE_BOUND));
        let qe = pole(order);
        let emb = move |r: f64, phi: f64| tangent_identity(develop(a, r, phi)) + cone_harmonic_at(&qe, a, r, phi) * 0.2;
        let n = (0.75 / cfg.grid).round().max(8.0) as usize;
        let s = singular_embedding(a, &emb, (0.5, 1.5), n, 2 * n)?;
        for c in &s.checks {
            let id = format!("cone.singular.{tag}.{}", c.name.replace(' ', "_"));
            let mut check = if c.lower {
                Check::at_least(id, c.name, c.measured, c.bound)
            } else {
                Check::at_most(id, c.name, c.measured, c.bound)
            };
            // some verdicts also involve a fit quality or a second bound
            check.pass &= c.pass;
            checks.push(check);
        }
        checks.push(Check::within(format!("cone.flat_angle.{tag}"), "cone angle of the flat structure = θ0", s.flat_angle, a.theta(), ANGLE_BOUND));
        checks.push(Check::within(format!("cone.first_form_angle.{tag}"), "cone angle of I = h(b·, b·) = θ0", s.first_form_angle.theta, a.theta(), ANGLE_BOUND));
    }
    let theta = PI / 2.0;
    let sweep = wedge_sweep(theta, 1.0, (0.5 * theta).cos() * (1.0 + 1e-6), 1e3, 100)?;
    let rel = sweep.iter().map(|w| w.relation_residual().abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("cone.wedge_relation", "θ1 + θ2 − θ = 2π", rel, WEDGE_RELATION_BOUND));
    checks.push(Check::holds("cone.wedge_large_angle", "one of θ1, θ2 lies in [π, 2π)", sweep.iter().all(|w| w.has_large_angle())));
    profiles.push(Profile {
        name: "wedge_sweep".into(),
        columns: vec!["bisector_distance".into(), "theta1".into(), "theta2".into()],
        rows: codazzi::cone::radius_ladder((0.5 * theta).cos() * (1.0 + 1e-6), 1e3, 100).into_iter().zip(&sweep).map(|(d, w)| vec![d, w.theta1, w.theta2]).collect(),
    });
    Ok(Section { checks, profiles, pairing: None })
}

fn pairing(cfg: &SuiteConfig) -> SuiteResult {
    let g = SurfaceGroup::build_genus2_octagon()?;
    let p = basis_pairing(&g, cfg.grid)?;
    let mut checks = vec![
        Check::at_most("pairing.pointwise", "<ι_*b ∧ ι_*b'> = ½ tr(J b b') at every node", p.pointwise_residual, POINTWISE_BOUND),
        Check::at_most("pairing.wedge_trace", "∫<ι_*b ∧ ι_*b'> = ½ ∫tr(J b b')", p.max_wedge_trace_gap(), WEDGE_TRACE_BOUND),
        Check::at_most("pairing.cup", "cup product of cocycles = ∫<ι_*b ∧ ι_*b'> (relative to the matrix scale)", p.max_cup_error(), cfg.tol_global),
        Check::within("pairing.cup_constant", "calibrated cup constant", p.calibration.constant, p.calibration.predicted, cfg.tol_global * p.calibration.predicted.abs()),
    ];
    let mut ratios = Vec::new();
    let (mut cup, mut trace) = (0.0f64, 0.0f64);
    for pair in &p.pairs {
        let r = goldman_wp_report(&p.basis[pair.i], &p.basis[pair.j], &g, cfg.grid, &p.calibration)?;
        cup = cup.max(r.rel_err_cup.unwrap_or(0.0));
        trace = trace.max(r.rel_err_trace.unwrap_or(0.0));
        ratios.push(RatioRow { i: pair.i, j: pair.j, omega_b_cup: r.omega_b_cup, omega_b_trace: r.omega_b_trace, omega_wp: r.omega_wp, ratio_cup: r.ratio_cup, ratio_trace: r.ratio_trace });
    }
    checks.push(Check::at_most("pairing.ratio_cup", "ω^B / ω_WP = 1/8 through the cup product (relative)", cup, cfg.tol_global));
    checks.push(Check::at_most("pairing.ratio_trace", "ω^B / ω_WP = 1/8 through the trace integral (relative)", trace, cfg.tol_alg));
    // trivial factors, on a quadrature refined twice so the integral has converged
    let quad = octagon_quadrature(&g, cfg.grid / 4.0)?;
    let mut rng = FieldRng::new(cfg.seed);
    let mut poly = vec![(0, 0, 1.0)];
    poly.extend(rng.klein_polynomial(3, 0.5).terms);
    let hu = trivial_nodes(&quad, &BumpPotential { centre: g.center(), support: 0.9, poly });
    let q = rng.quad_diff(3, 1.0);
    let disc = DiscChart::standard();
    let bq = sample_nodes(&quad, &|x| harmonic_tensor_at(&q, &disc, x));
    let local: f64 = quad.points.iter().zip(&quad.weights).zip(bq.iter().zip(&hu)).map(|((x, w), (b, h))| w * trace_jbb(*x, b, h)).sum();
    checks.push(Check::at_most("pairing.trivial_factor", "∫tr(J b_q H(u)) = 0 for compactly supported u", local.abs(), TRIVIAL_BOUND));
    Ok(Section { checks, profiles: Vec::new(), pairing: Some(PairingTables { spacing: p.spacing, wedge: p.wedge, trace_half: p.trace_half, cup: p.cup, ratios }) })
}
