use std::collections::BTreeMap;

use proptest::prelude::*;
use sdmbench_core::assemblage::{assemble, AssemblageRule};
use sdmbench_core::baselines::{ConstantPredictor, CooccurrenceTable, KnnPa, KnnPo};
use sdmbench_core::features::{ExpansionKinds, FeatureExpansion, FeatureMatrix, DEFAULT_HINGE_QUANTILES};
use sdmbench_core::metrics::{micro_f1, set_size_errors, SurveyConfusion};
use sdmbench_core::spatial::SpatialIndex;
use sdmbench_core::split::{block_id, spatial_block_split};
use sdmbench_core::{Location, PaSurvey, PoRecord, PredictionSet, ProbabilityVector};

const S: usize = 12;

fn species_set(min: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::btree_set(0..S, min..6).prop_map(|s| s.into_iter().collect())
}

fn surveys_and_preds() -> impl Strategy<Value = (Vec<PaSurvey>, Vec<PredictionSet>)> {
    prop::collection::vec((species_set(1), species_set(0), 0.0..10.0f64, 0.0..10.0f64), 1..20).prop_map(
        |rows| {
            let mut truth = Vec::new();
            let mut preds = Vec::new();
            for (i, (t, p, x, y)) in rows.into_iter().enumerate() {
                let id = format!("s{i}");
                truth.push(PaSurvey::new(id.clone(), Location::planar(x, y), t, None).unwrap());
                preds.push(PredictionSet::new(id, p));
            }
            (truth, preds)
        },
    )
}

proptest! {
    #[test]
    fn confusion_counts_are_consistent(t in species_set(1), p in species_set(0)) {
        let c = SurveyConfusion::from_sorted(&t, &p);
        prop_assert!(c.tp <= t.len() && c.tp <= p.len());
        prop_assert_eq!(c.tp + c.fp, p.len());
        prop_assert_eq!(c.tp + c.fn_, t.len());
        prop_assert!((0.0..=1.0).contains(&c.f1()));
    }

    #[test]
    fn micro_f1_ignores_order_and_consistent_relabeling(
        (truth, preds) in surveys_and_preds(),
        perm in Just((0..S).collect::<Vec<_>>()).prop_shuffle(),
        rotate in 0usize..20,
    ) {
        let base = micro_f1(&truth, &preds).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));

        let mut shuffled = truth.clone();
        shuffled.rotate_left(rotate % truth.len());
        prop_assert!((micro_f1(&shuffled, &preds).unwrap() - base).abs() < 1e-12);

        let relabel = |v: &[usize]| v.iter().map(|&s| perm[s]).collect::<Vec<_>>();
        let truth2: Vec<_> = truth
            .iter()
            .map(|s| PaSurvey::new(s.survey_id.clone(), s.location, relabel(s.present()), None).unwrap())
            .collect();
        let preds2: Vec<_> = preds.iter().map(|p| PredictionSet::new(p.survey_id.clone(), relabel(p.species()))).collect();
        prop_assert!((micro_f1(&truth2, &preds2).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn set_size_bias_bounded_by_abs_error((truth, preds) in surveys_and_preds()) {
        let r = set_size_errors(&truth, &preds).unwrap();
        prop_assert!(r.bias.abs() <= r.abs_error + 1e-12);
    }

    #[test]
    fn block_split_is_consistent(
        (truth, _) in surveys_and_preds(),
        size in 0.5..5.0f64,
        frac in 0.05..0.95f64,
        seed in any::<u64>(),
    ) {
        let a = match spatial_block_split(&truth, size, frac, Some((0.0, 0.0)), seed) {
            Ok(a) => a,
            Err(_) => return Ok(()),
        };
        let mut counts: BTreeMap<(i64, i64), usize> = BTreeMap::new();
        for s in &truth {
            let b = block_id(&s.location, size, (0.0, 0.0));
            *counts.entry(b).or_default() += 1;
            prop_assert_eq!(a.side_of(&s.survey_id), Some(a.blocks[&b]));
        }
        let largest = *counts.values().max().unwrap() as f64 / truth.len() as f64;
        prop_assert!((a.test_fraction() - frac).abs() <= largest + 1e-12);

        let mut reversed = truth.clone();
        reversed.reverse();
        let b = spatial_block_split(&reversed, size, frac, Some((0.0, 0.0)), seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fixed_k_invariant_to_increasing_transform(
        p in prop::collection::vec(0.0..1.0f64, S),
        k in 0usize..=S,
    ) {
        let rule = AssemblageRule::fixed_k(k);
        let a = assemble("x", &ProbabilityVector::new(p.clone()).unwrap(), &rule);
        let q: Vec<f64> = p.iter().map(|v| v * v * 0.5 + 0.1).collect();
        let b = assemble("x", &ProbabilityVector::new(q).unwrap(), &rule);
        prop_assert_eq!(a.species(), b.species());
        prop_assert_eq!(a.len(), k);
    }

    #[test]
    fn threshold_sets_shrink_as_tau_grows(p in prop::collection::vec(0.0..1.0f64, S), t1 in 0.01..0.99f64, t2 in 0.01..0.99f64) {
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let pv = ProbabilityVector::new(p).unwrap();
        let big = assemble("x", &pv, &AssemblageRule::threshold(lo));
        let small = assemble("x", &pv, &AssemblageRule::threshold(hi));
        prop_assert!(small.species().iter().all(|s| big.species().contains(s)));
    }

    #[test]
    fn cooccurrence_entries_are_probabilities((truth, _) in surveys_and_preds()) {
        let table = CooccurrenceTable::build(&truth, S).unwrap();
        for c in 0..S {
            let seen = truth.iter().any(|s| s.contains(c));
            for s in 0..S {
                let v = table.cond(s, c);
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if seen {
                prop_assert!((table.cond(c, c) - 1.0).abs() < 1e-12);
            }
        }
        let observed: Vec<usize> = truth[0].present().to_vec();
        prop_assert!(table.combine(&observed).values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn knn_po_sets_grow_with_k(
        pts in prop::collection::vec((0u8..6, 0u8..6, 0..S), 5..40),
        qx in 0.0..6.0f64,
        qy in 0.0..6.0f64,
    ) {
        let po: Vec<PoRecord> = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y, s))| PoRecord {
                record_id: format!("r{i}"),
                location: Location::planar(x as f64, y as f64),
                species: s,
                year: None,
                source: None,
            })
            .collect();
        let q = Location::planar(qx, qy);
        let mut prev = 0;
        for k in 1..=po.len() {
            let n = KnnPo::fit(&po, k).unwrap().predict(&q).unwrap().len();
            prop_assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn kd_tree_matches_brute_force(
        pts in prop::collection::vec((0u8..8, 0u8..8), 1..60),
        qx in -1.0..9.0f64,
        qy in -1.0..9.0f64,
        r in 0.0..4.0f64,
    ) {
        let locs: Vec<Location> = pts.iter().map(|&(x, y)| Location::planar(x as f64, y as f64)).collect();
        let index = SpatialIndex::new(&locs).unwrap();
        let q = Location::planar(qx, qy);
        let d: Vec<f64> = locs.iter().map(|l| ((l.x - qx).powi(2) + (l.y - qy).powi(2)).sqrt()).collect();
        let mut within: Vec<usize> = index.within_radius(&q, r).unwrap().into_iter().map(|n| n.index).collect();
        within.sort_unstable();
        let expected: Vec<usize> = (0..locs.len()).filter(|&i| d[i] <= r).collect();
        prop_assert_eq!(within, expected.clone());
        prop_assert_eq!(index.any_within(&q, r).unwrap(), !expected.is_empty());
    }

    #[test]
    fn hinge_knots_ascend_within_range(rows in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 2), 1..30)) {
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let e = FeatureExpansion::fit(&x, ExpansionKinds::ALL, &DEFAULT_HINGE_QUANTILES).unwrap();
        for (j, v) in e.variables.iter().enumerate() {
            let col = x.column(j);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v.hinge_knots.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(v.hinge_knots.iter().all(|&k| k >= lo && k <= hi));
        }
        let a = e.expand(&x).unwrap();
        prop_assert_eq!(a.clone(), e.expand(&x).unwrap());
        prop_assert_eq!(a.n_cols, e.n_outputs());
    }

    #[test]
    fn micro_f1_unit_iff_exact_and_monotone_in_single_edits(
        (truth, preds) in surveys_and_preds(),
        pick in 0usize..20,
        species in 0..S,
    ) {
        let f = micro_f1(&truth, &preds).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        let exact = truth.iter().zip(&preds).all(|(t, p)| t.present() == p.species());
        prop_assert_eq!(f == 1.0, exact);
        let perfect: Vec<PredictionSet> =
            truth.iter().map(|t| PredictionSet::new(t.survey_id.clone(), t.present().to_vec())).collect();
        prop_assert_eq!(micro_f1(&truth, &perfect).unwrap(), 1.0);

        let i = pick % truth.len();
        if preds[i].species().contains(&species) {
            return Ok(());
        }
        let mut edited = preds.clone();
        let mut set = preds[i].species().to_vec();
        set.push(species);
        edited[i] = PredictionSet::new(preds[i].survey_id.clone(), set);
        let g = micro_f1(&truth, &edited).unwrap();
        if truth[i].contains(species) {
            prop_assert!(g >= f - 1e-15);
        } else {
            prop_assert!(g <= f + 1e-15);
        }
    }

    #[test]
    fn raising_a_probability_never_removes_the_species(
        p in prop::collection::vec(0.0..1.0f64, S),
        s in 0..S,
        bump in 0.0..1.0f64,
        tau in 0.01..0.99f64,
        k in 0usize..=S,
        s_max in 0usize..=S,
    ) {
        let mut q = p.clone();
        q[s] = p[s] + (1.0 - p[s]) * bump;
        let (pv, qv) = (ProbabilityVector::new(p).unwrap(), ProbabilityVector::new(q).unwrap());
        for rule in [AssemblageRule::top_s(), AssemblageRule::top_s().with_s_max(s_max), AssemblageRule::threshold(tau), AssemblageRule::fixed_k(k)] {
            let before = assemble("x", &pv, &rule);
            let after = assemble("x", &qv, &rule);
            if before.species().contains(&s) {
                prop_assert!(after.species().contains(&s), "{:?}", rule);
            }
        }
    }

    #[test]
    fn top_s_size_is_the_rounded_mass_capped(p in prop::collection::vec(0.0..1.0f64, S), s_max in 0usize..=S) {
        let mass: f64 = p.iter().sum();
        let pv = ProbabilityVector::new(p.clone()).unwrap();
        let set = assemble("x", &pv, &AssemblageRule::top_s());
        prop_assert_eq!(set.len(), mass.round() as usize);
        let capped = assemble("x", &pv, &AssemblageRule::top_s().with_s_max(s_max));
        prop_assert_eq!(capped.len(), (mass.round() as usize).min(s_max));
        // The chosen species are the most probable ones.
        let min_in = set.species().iter().map(|&s| p[s]).fold(f64::INFINITY, f64::min);
        let max_out = (0..S).filter(|s| !set.species().contains(s)).map(|s| p[s]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(set.is_empty() || max_out <= min_in);
    }

    #[test]
    fn constant_k_bias_is_k_minus_mean_truth_size((truth, _) in surveys_and_preds(), k in 0usize..=S) {
        let c = ConstantPredictor::with_k(&truth, S, k).unwrap();
        prop_assert_eq!(c.predict().len(), k);
        let preds: Vec<PredictionSet> = truth.iter().map(|t| PredictionSet::new(t.survey_id.clone(), c.predict())).collect();
        let mean = truth.iter().map(|t| t.present().len()).sum::<usize>() as f64 / truth.len() as f64;
        let r = set_size_errors(&truth, &preds).unwrap();
        prop_assert!((r.bias - (k as f64 - mean)).abs() < 1e-12);
    }

    #[test]
    fn knn_pa_mass_is_mean_neighbour_set_size(
        (truth, _) in surveys_and_preds(),
        k in 1usize..8,
        qx in 0.0..10.0f64,
        qy in 0.0..10.0f64,
    ) {
        let k = k.min(truth.len());
        let model = KnnPa::fit(&truth, S, k).unwrap();
        let q = Location::planar(qx, qy);
        let mut d: Vec<(f64, usize)> = truth.iter().map(|t| {
            let (dx, dy) = (t.location.x - qx, t.location.y - qy);
            ((dx * dx + dy * dy).sqrt(), t.present().len())
        }).collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        prop_assume!(k == d.len() || d[k - 1].0 < d[k].0);
        let expected = d[..k].iter().map(|&(_, n)| n as f64).sum::<f64>() / k as f64;
        let mass: f64 = model.predict(&q).unwrap().values().iter().sum();
        prop_assert!((mass - expected).abs() < 1e-9);
    }

    #[test]
    fn hinge_features_are_non_negative(rows in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 2), 2..30)) {
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let e = FeatureExpansion::fit(&x, ExpansionKinds::ALL, &DEFAULT_HINGE_QUANTILES).unwrap();
        let a = e.expand(&x).unwrap();
        for (j, name) in e.output_names(&x.names).iter().enumerate() {
            if name.contains("hinge") {
                prop_assert!((0..a.n_rows).all(|i| a.get(i, j) >= 0.0), "{}", name);
            }
        }
    }
}
