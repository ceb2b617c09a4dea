//! Property tests for the module invariants.

use proptest::prelude::*;
use skewlab::dynamics::{f_star, f_star_perturbed, lattes_lemniscatic, monomial, EndoP2};
use skewlab::foliation::{
    catalog_certificates, invariance_check, logarithmic_form, pencil_001, pullback_polys, wedge, CheckMode,
    PolyOneForm, WedgePoly, NUMERIC_TOL,
};
use skewlab::green::{estimate_regularity, sigma_t_box_mass, slice_current, GreenEvaluator};
use skewlab::measure::sampler::preimages_exact;
use skewlab::normal_form::{poincare_dulac_2d, semilinearize_completion, RESONANCE_TOL};
use skewlab::numeric::{poly_roots, Exact, HomPoly, Jet2, JetMap, Line};
use skewlab::periodic::{orbit_differential, periodic_points_1d, periodic_points_skew};
use skewlab::poincare::{direction_probe, dn_closed_form, sigma_fiber, ClosedForm, PoincareEvaluator, Policy};
use skewlab::{rng, C64, P2};

fn cplx() -> impl Strategy<Value = C64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| C64::new(a, b))
}

fn small_int() -> impl Strategy<Value = i64> {
    -4i64..=4
}

fn hom_poly(deg: u32) -> impl Strategy<Value = HomPoly<C64>> {
    let n = ((deg + 1) * (deg + 2) / 2) as usize;
    proptest::collection::vec(cplx(), n).prop_map(move |cs| {
        let mut terms = Vec::new();
        let mut it = cs.into_iter();
        for i in 0..=deg {
            for j in 0..=(deg - i) {
                terms.push(([i, j, deg - i - j], it.next().unwrap()));
            }
        }
        HomPoly::from_terms(3, deg, terms).unwrap()
    })
}

fn exact_poly(deg: u32) -> impl Strategy<Value = HomPoly<Exact>> {
    let n = ((deg + 1) * (deg + 2) / 2) as usize;
    proptest::collection::vec((small_int(), small_int()), n).prop_map(move |cs| {
        let mut terms = Vec::new();
        let mut it = cs.into_iter();
        for i in 0..=deg {
            for j in 0..=(deg - i) {
                let (a, b) = it.next().unwrap();
                terms.push(([i, j, deg - i - j], Exact::gaussian(a, 1, b, 1)));
            }
        }
        HomPoly::from_terms(3, deg, terms).unwrap()
    })
}

fn exact_form(deg: u32) -> impl Strategy<Value = PolyOneForm<Exact>> {
    (exact_poly(deg), exact_poly(deg), exact_poly(deg))
        .prop_filter_map("nonzero form", |(a, b, c)| PolyOneForm::homogeneous(a, b, c).ok())
}

fn jet(m: usize, from: usize) -> impl Strategy<Value = Jet2> {
    proptest::collection::vec(cplx(), (m + 1) * (m + 2) / 2).prop_map(move |cs| {
        let mut j = Jet2::zero(m);
        let mut it = cs.into_iter();
        for k in 0..=m {
            for i in 0..=k {
                let v = it.next().unwrap();
                if k >= from {
                    j.set(i, k - i, v * 0.3);
                }
            }
        }
        j
    })
}

fn jet_map(m: usize) -> impl Strategy<Value = JetMap> {
    (jet(m, 1), jet(m, 1)).prop_map(|(a, b)| JetMap::new(a, b))
}

fn point() -> impl Strategy<Value = P2> {
    any::<u64>().prop_map(|s| P2::random(&mut rng::seeded(s)))
}

fn x0() -> f64 {
    (1.0 + 48f64.sqrt() / 6.0).sqrt()
}

fn f_star_fixed_point() -> P2 {
    let x = x0();
    let t = (4.0 * x * (x * x - 1.0)).cbrt();
    P2::new([C64::new(x, 0.0), C64::new(1.0, 0.0), C64::new(t, 0.0)]).unwrap()
}

fn skew_maps() -> Vec<EndoP2> {
    vec![f_star(), monomial(2), monomial(3)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // numeric core

    #[test]
    fn homogeneity(p in hom_poly(3), z in [cplx(), cplx(), cplx()], lam in cplx()) {
        let lhs = p.eval(&z.map(|x| x * lam));
        let rhs = lam.powu(3) * p.eval(&z);
        let nz = z.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let scale = p.max_coeff() * 10.0 * (lam.norm() * nz).powi(3);
        prop_assert!((lhs - rhs).norm() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn jet_composition_is_associative(a in jet_map(6), b in jet_map(6), c in jet_map(6)) {
        let l = a.compose(&b).unwrap().compose(&c).unwrap();
        let r = a.compose(&b.compose(&c).unwrap()).unwrap();
        prop_assert!(l.sub(&r).max_abs_from(0) < 1e-9 * (1.0 + l.max_abs_from(0)));
    }

    #[test]
    fn roots_reconstruct_coefficients(roots in proptest::collection::vec(cplx(), 1..7), lead in cplx()) {
        prop_assume!(lead.norm() > 0.1);
        let mut coeffs = vec![lead];
        for r in &roots {
            let mut next = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
            for (k, c) in coeffs.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= c * r;
            }
            coeffs = next;
        }
        let found = poly_roots(&coeffs, 1e-13).unwrap();
        let mut rec = vec![lead];
        for rt in &found {
            for _ in 0..rt.multiplicity {
                let mut next = vec![C64::new(0.0, 0.0); rec.len() + 1];
                for (k, c) in rec.iter().enumerate() {
                    next[k + 1] += c;
                    next[k] -= c * rt.z;
                }
                rec = next;
            }
        }
        prop_assert_eq!(rec.len(), coeffs.len());
        let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (a, b) in rec.iter().zip(&coeffs) {
            prop_assert!((a - b).norm() <= 1e-8 * scale);
        }
    }

    #[test]
    fn normalization_is_idempotent(p in point()) {
        let n1 = p.normalized();
        let n2 = n1.normalized();
        prop_assert_eq!(n2.coords(), n1.coords());
    }

    // dynamics

    #[test]
    fn skew_products_fiber_over_base(p in point()) {
        for f in skew_maps() {
            let base = f.base().unwrap();
            let Ok(x) = p.pencil_base() else { continue };
            prop_assume!(p.unit_lift()[0].norm().max(p.unit_lift()[1].norm()) > 1e-6);
            let y = f.eval(&p).unwrap();
            prop_assert!(y.pencil_base().unwrap().fs_distance(&base.eval(&x).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn pencil_lines_map_into_pencil_lines(x in cplx(), t1 in cplx(), t2 in cplx()) {
        let f = f_star();
        let a = f.eval(&P2::new([x, C64::new(1.0, 0.0), t1]).unwrap()).unwrap();
        let b = f.eval(&P2::new([x, C64::new(1.0, 0.0), t2]).unwrap()).unwrap();
        prop_assert!(a.pencil_base().unwrap().fs_distance(&b.pencil_base().unwrap()) < 1e-10);
    }

    // measure

    #[test]
    fn preimages_are_preimages(p in point()) {
        for f in skew_maps() {
            prop_assume!(p.unit_lift()[0].norm().max(p.unit_lift()[1].norm()) > 1e-6);
            let pre = preimages_exact(&f, &p).unwrap();
            prop_assert_eq!(pre.len(), (f.degree() * f.degree()) as usize);
            for q in pre {
                prop_assert!(f.eval(&q).unwrap().fs_distance(&p) < 1e-9);
            }
        }
    }

    // normal form

    #[test]
    fn homological_identity_holds(h in jet(8, 2), chi in 2.5..5.0f64, mu in 1.2..2.2f64) {
        let g = JetMap::new(
            h.clone().add(&Jet2::var(8, 0).scale(C64::new(chi, 0.0))),
            Jet2::var(8, 1).scale(C64::new(mu, 0.3)).add(&h.scale(C64::new(0.5, 0.0))),
        );
        let Ok(nf) = poincare_dulac_2d(&g, 8, RESONANCE_TOL) else { return Ok(()) };
        prop_assert!(nf.chi1.norm() >= nf.chi2.norm());
        let lhs = nf.xi.compose(&g).unwrap();
        let rhs = nf.d_jet().compose(&nf.xi).unwrap();
        prop_assert!(lhs.sub(&rhs).max_abs_from(0) <= 1e-9 * (1.0 + lhs.max_abs_from(0)));
    }

    #[test]
    fn semilinear_second_component_is_w(h in jet(8, 2), chi in 3.0..5.0f64) {
        let w = Jet2::var(8, 1);
        let g = JetMap::new(Jet2::var(8, 0).scale(C64::new(chi, 0.0)).add(&h), w.scale(C64::new(1.5, 0.0)));
        let s = semilinearize_completion(&g, 8, RESONANCE_TOL).unwrap();
        prop_assert_eq!(&s.xi.f[1], &w);
    }

    // Poincaré map

    #[test]
    fn closed_form_inverse_is_exact(n in 0usize..12, c in -3i32..=3) {
        let g = JetMap::normal_form(6, C64::new(4.0, 0.0), C64::new(2.0, 0.0), C64::new(c as f64, 0.0), 2);
        let nf = poincare_dulac_2d(&g, 6, RESONANCE_TOL).unwrap();
        let f = dn_closed_form(&nf, n, false).unwrap();
        let i = dn_closed_form(&nf, n, true).unwrap();
        prop_assert_eq!(i.compose(&f).to_jet(6), ClosedForm::identity().to_jet(6));
    }

    // foliation

    #[test]
    fn wedge_antisymmetric_bilinear(a in exact_form(1), b in exact_form(1), c in exact_form(1)) {
        let (WedgePoly::Homogeneous(ab), WedgePoly::Homogeneous(ba)) = (wedge(&a, &b).unwrap(), wedge(&b, &a).unwrap()) else { unreachable!() };
        for k in 0..3 {
            prop_assert!(ab[k].add(&ba[k]).unwrap().is_zero());
        }
        let (PolyOneForm::Homogeneous(pb), PolyOneForm::Homogeneous(pc)) = (&b, &c) else { unreachable!() };
        let sum = [pb[0].add(&pc[0]).unwrap(), pb[1].add(&pc[1]).unwrap(), pb[2].add(&pc[2]).unwrap()];
        let WedgePoly::Homogeneous(l) = wedge(&a, &PolyOneForm::Homogeneous(sum)).unwrap() else { unreachable!() };
        let WedgePoly::Homogeneous(ac) = wedge(&a, &c).unwrap() else { unreachable!() };
        for k in 0..3 {
            prop_assert_eq!(&l[k], &ab[k].add(&ac[k]).unwrap());
        }
    }

    #[test]
    fn euler_certificate_for_random_skew(p in exact_poly(2), q in exact_poly(2), r in exact_poly(2)) {
        let p = p.map_coeffs(|c| c.clone());
        let strip = |h: &HomPoly<Exact>| HomPoly::from_terms(3, 2, h.terms().iter().filter(|(e, _)| e[2] == 0).cloned()).unwrap();
        let map = [strip(&p), strip(&q), r];
        prop_assume!(!map[0].is_zero() && !map[1].is_zero());
        let w = pencil_001();
        prop_assert!(wedge(&w, &pullback_polys(&map, &w).unwrap()).unwrap().is_zero());
    }

    #[test]
    fn rescaling_keeps_exact_verdict(a in 1i64..9, b in 1i64..9, neg in any::<bool>()) {
        let s = Exact::rational(if neg { -a } else { a }, b);
        for f in [f_star(), f_star_perturbed(), monomial(2)] {
            for w in [pencil_001(), logarithmic_form([Exact::from_int(1), Exact::from_int(-1), Exact::zero()]).unwrap()] {
                let v1 = invariance_check(&f, &w, CheckMode::Exact, NUMERIC_TOL).unwrap().verdict;
                let v2 = invariance_check(&f, &w.scale(&s), CheckMode::Exact, NUMERIC_TOL).unwrap().verdict;
                prop_assert_eq!(v1, v2);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn green_error_contracts(n in 0usize..20) {
        for f in skew_maps() {
            let g = GreenEvaluator::new(f.clone());
            let d = f.degree() as f64;
            prop_assert!(g.certified_error(n) >= d * g.certified_error(n + 1) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn slice_weights_and_count(seed in any::<u64>(), n in 1usize..4) {
        let mut r = rng::seeded(seed);
        let (l, m) = (Line::random(&mut r), Line::random(&mut r));
        let f = f_star();
        let s = slice_current(&f, &l, &m, n).unwrap();
        let d = f.degree() as usize;
        prop_assert_eq!(s.points.len(), d.pow(n as u32));
        let w0 = (d as f64).powi(-(n as i32));
        for w in &s.weights {
            prop_assert_eq!(*w, w0);
        }
    }

    #[test]
    fn box_mass_covers_everything(seed in 0u64..1000) {
        let f = f_star();
        let center = P2::random(&mut rng::seeded(seed));
        let all = sigma_t_box_mass(&f, &center, 2.0, 16, 2, seed).unwrap();
        prop_assert!((all.estimate - 1.0).abs() <= 3.0 * all.stderr + 1e-12);
        let small = sigma_t_box_mass(&f, &center, 0.3, 16, 2, seed).unwrap();
        let big = sigma_t_box_mass(&f, &center, 0.6, 16, 2, seed).unwrap();
        prop_assert!(small.estimate <= big.estimate + 1e-15);
    }

    #[test]
    fn regularity_is_running_max(seed in any::<u64>(), a in 20usize..60, extra in 1usize..60) {
        let f = f_star();
        let r1 = estimate_regularity(&f, 3, a, seed).unwrap();
        let r2 = estimate_regularity(&f, 3, a + extra, seed).unwrap();
        prop_assert!(r2.d_inf >= r1.d_inf);
    }

    #[test]
    fn periodic_records_are_periodic_and_separated(n in 1usize..3) {
        let th = lattes_lemniscatic();
        let recs = periodic_points_1d(&th, n).unwrap();
        for r in &recs {
            let x = r.p1().unwrap();
            prop_assert!(th.iterate(&x, n).unwrap().fs_distance(&x) < 1e-10);
        }
        for i in 0..recs.len() {
            for j in i + 1..recs.len() {
                prop_assert!(recs[i].p1().unwrap().fs_distance(&recs[j].p1().unwrap()) > 1e-8);
            }
        }
        let f = f_star();
        for r in periodic_points_skew(&f, 1).unwrap() {
            let p = r.p2().unwrap();
            prop_assert!(f.iterate(&p, 1).unwrap().fs_distance(&p) < 1e-10);
            let ev = skewlab::dynamics::eig2(&orbit_differential(&f, &p, 1, p.max_index()).unwrap());
            let mut m = [ev[0].norm(), ev[1].norm()];
            m.sort_by(|a, b| b.total_cmp(a));
            prop_assert!((m[0] - r.chi1.norm()).abs() <= 1e-8 * r.chi1.norm().max(1.0));
        }
    }

    #[test]
    fn semiconjugacy_and_depth_stability(xr in [0.0..5.0f64, 0.0..5.0f64], xa in [0.0..std::f64::consts::TAU, 0.0..std::f64::consts::TAU]) {
        let ev = PoincareEvaluator::new(&f_star(), &f_star_fixed_point(), 1, Policy::default()).unwrap();
        let x = [C64::from_polar(xr[0], xa[0]), C64::from_polar(xr[1], xa[1])];
        prop_assert!(ev.semiconjugacy_residual(x).unwrap() < ev.policy.tol);
        let s = ev.eval_sigma(x).unwrap();
        prop_assert!(s.stability.unwrap() < s.error);
    }

    #[test]
    fn fiber_residuals_and_probe_kernel(xr in [0.0..0.08f64, 0.0..0.08f64], xa in [0.0..std::f64::consts::TAU, 0.0..std::f64::consts::TAU]) {
        let ev = PoincareEvaluator::new(&f_star(), &f_star_fixed_point(), 1, Policy::default()).unwrap();
        let x = [C64::from_polar(xr[0], xa[0]), C64::from_polar(xr[1], xa[1])];
        let s = ev.eval_sigma_raw(x).unwrap();
        let fib = sigma_fiber(&ev, &s.point, s.depth.max(4) + 1).unwrap();
        prop_assert!(!fib.elements.is_empty());
        for e in &fib.elements {
            let back = ev.eval_sigma_raw(e.x).unwrap().point.fs_distance(&s.point);
            prop_assert!(back <= e.residual * (1.0 + 1e-9) + 1e-15);
        }
        let pr = direction_probe(&ev, &s.point, &fib).unwrap();
        for k in &pr.kernel_residuals {
            prop_assert!(*k < 1e-6);
        }
    }

    #[test]
    fn catalog_pullback_preserves_descent(_dummy in 0u8..1) {
        for (e, ok) in catalog_certificates() {
            prop_assert!(ok);
            prop_assert!(pullback_polys(&e.map, &e.form).unwrap().descends().unwrap());
        }
    }
}
