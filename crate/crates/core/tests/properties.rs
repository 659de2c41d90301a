mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use svshape::characterize::{characterize_model, pair_class_matrix, Group, CharacteristicTable};
use svshape::digest::tensor_digest;
use svshape::dsv::{all_pairs_dsv, cosine_distance, histogram, pairwise_dsv, polar_histogram, DsvSamples, PoolSource};
use svshape::generator::{
    draw_increment_count, generate_matrix, generate_row_counted, generate_template, CountLaw, GeneratorConfig,
};
use svshape::lora::{reshape_lora_init, tensor_name, LoraTargetSpec, Mode, Role};
use svshape::rng::stream;
use svshape::spectral::{top_singular_values, Msv, SvdMethod};
use svshape::ProjectionKind::{self, *};

fn spectrum(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..100.0, 1..=max_len).prop_map(|mut v| {
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v
    })
}

fn msv_set() -> impl Strategy<Value = Vec<Msv>> {
    (2usize..8, 2usize..8).prop_flat_map(|(layers, r)| {
        prop::collection::vec(
            prop::collection::vec(prop::collection::vec(0.01f64..10.0, r), layers),
            7,
        )
        .prop_map(|kinds| {
            kinds
                .into_iter()
                .zip(ProjectionKind::ALL)
                .map(|(rows, kind)| {
                    let rows = rows
                        .into_iter()
                        .map(|mut v| {
                            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
                            v
                        })
                        .collect();
                    Msv::from_values(kind, rows).unwrap()
                })
                .collect()
        })
    })
}

fn count_law() -> impl Strategy<Value = CountLaw> {
    prop_oneof![
        (0u64..200).prop_map(|count| CountLaw::Constant { count }),
        (-20.0f64..80.0, 0.1f64..30.0).prop_map(|(mu, sigma)| CountLaw::GaussianCount { mu, sigma }),
        (0.2f64..4.0, 0.1f64..20.0).prop_map(|(shape, scale)| CountLaw::ParetoCount { shape, scale }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cosine_distance_laws(x in spectrum(24), scale in 1e-3f64..1e3) {
        let y: Vec<f64> = x.iter().rev().copied().collect();
        let d = cosine_distance(&x, &y).unwrap();
        prop_assert_eq!(cosine_distance(&x, &x).unwrap(), 0.0);
        prop_assert_eq!(d, cosine_distance(&y, &x).unwrap());
        let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
        prop_assert!((cosine_distance(&xs, &y).unwrap() - d).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn pool_sizes_follow_combinatorics(msvs in msv_set()) {
        let l = msvs[0].num_layers();
        prop_assert_eq!(pairwise_dsv(&msvs[0], &msvs[0]).unwrap().len(), l * (l - 1) / 2);
        prop_assert_eq!(pairwise_dsv(&msvs[0], &msvs[3]).unwrap().len(), l * l);
        let n = 7 * l;
        let all = all_pairs_dsv(&msvs).unwrap();
        prop_assert_eq!(all.len(), n * (n - 1) / 2);
    }

    #[test]
    fn characterizer_always_partitions(msvs in msv_set(), order_seed in 0usize..6) {
        let order = svshape::characterize::preset_order(svshape::characterize::PRESETS[order_seed]).unwrap();
        let table = characterize_model("p", &msvs, &order).unwrap();
        let mut kinds: Vec<ProjectionKind> = table.groups.iter().flat_map(|g| g.kinds()).collect();
        kinds.sort();
        prop_assert_eq!(kinds, ProjectionKind::ALL.to_vec());
        // References appear in preference order; every member pool with its
        // reference is power-law and no later reference joins an earlier group.
        let matrix = pair_class_matrix(&msvs).unwrap();
        for (i, g) in table.groups.iter().enumerate() {
            for m in &g.members {
                prop_assert!(matrix.get(g.reference, *m).unwrap().is_power_law());
            }
            for later in &table.groups[i + 1..] {
                prop_assert!(!matrix.get(g.reference, later.reference).unwrap().is_power_law());
            }
        }
    }

    #[test]
    fn pair_matrix_is_symmetric(msvs in msv_set()) {
        let matrix = pair_class_matrix(&msvs).unwrap();
        prop_assert_eq!(matrix.len(), 28);
        for a in ProjectionKind::ALL {
            for b in ProjectionKind::ALL {
                prop_assert_eq!(matrix.get(a, b), matrix.get(b, a));
            }
        }
    }

    #[test]
    fn histogram_conserves_mass(values in prop::collection::vec(0.0f64..2.0, 1..300), bins in 2usize..40) {
        let pool = DsvSamples::new(values.clone(), PoolSource::AllPairs, 4).unwrap();
        let h = histogram(&pool, bins).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<usize>(), values.len());
        let area: f64 = h.densities.iter().zip(h.edges.windows(2)).map(|(d, e)| d * (e[1] - e[0])).sum();
        prop_assert!((area - 1.0).abs() < 1e-9);
    }

    #[test]
    fn polar_sectors_conserve_mass(values in prop::collection::vec(0.0f64..2.0, 2..300), sectors in 4usize..72) {
        let pool = DsvSamples::new(values.clone(), PoolSource::AllPairs, 4).unwrap();
        match polar_histogram(&pool, sectors) {
            Ok(p) => prop_assert_eq!(p.counts.iter().sum::<usize>(), values.len()),
            Err(_) => prop_assert!(values.iter().all(|v| *v == values[0])),
        }
    }

    #[test]
    fn counts_stay_in_range(law in count_law(), n in 1usize..500, seed in any::<u64>()) {
        let mut rng = stream(seed, "count", &[]);
        for _ in 0..20 {
            let p = draw_increment_count(&law, n, &mut rng);
            prop_assert!(p <= n);
            if let CountLaw::Constant { count } = law {
                prop_assert_eq!(p as u64, count.min(n as u64));
            }
        }
    }

    #[test]
    fn rows_differ_in_exactly_p_positions(law in count_law(), n in 1usize..200, seed in any::<u64>()) {
        let cfg = GeneratorConfig::new(n, 1, law, seed);
        let template = generate_template(&cfg).unwrap();
        let (row, p) = generate_row_counted(&template, &cfg, &mut stream(seed, "row", &[])).unwrap();
        let changed = row.iter().zip(&template).filter(|(a, b)| a != b).count();
        prop_assert_eq!(changed, p);
    }

    #[test]
    fn generation_is_deterministic(law in count_law(), n in 1usize..64, m in 1usize..16, seed in any::<u64>()) {
        let cfg = GeneratorConfig::new(n, m, law, seed);
        let a = generate_matrix(&cfg).unwrap();
        let b = generate_matrix(&cfg).unwrap();
        prop_assert_eq!(a.values.shape(), (m, n));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn singular_values_sorted_and_bounded(rows in 1usize..40, cols in 1usize..40, seed in any::<u64>()) {
        let x = common::random_matrix(rows, cols, seed);
        let r = rows.min(cols);
        let s = top_singular_values(&x, r, SvdMethod::Dense).unwrap();
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let fro2: f64 = x.iter().map(|v| v * v).sum();
        let sum2: f64 = s.iter().map(|v| v * v).sum();
        prop_assert!((fro2 - sum2).abs() <= 1e-9 * fro2.max(1.0));
    }
}

fn table() -> CharacteristicTable {
    CharacteristicTable {
        model_id: "ref".into(),
        rank: 8,
        groups: vec![
            Group { reference: Q, members: vec![K, Gate] },
            Group { reference: V, members: vec![O, Up, Down] },
        ],
        diagnostics: BTreeMap::new(),
        unclassified: BTreeMap::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reshape_shape_and_locality_laws(
        layers in 1usize..4,
        hidden in 4usize..40,
        kv in 1usize..20,
        inter in 4usize..60,
        rank in 1usize..8,
        seed in any::<u64>(),
        zero_b in any::<bool>(),
    ) {
        let mut target = LoraTargetSpec::llama_like("t", layers, hidden, kv, inter, rank);
        target.mode = if zero_b { Mode::ZeroB } else { Mode::PaperFaithful };
        let gen = GeneratorConfig::new(64, 64, CountLaw::pareto_default(64), 0);
        let bundle = reshape_lora_init(&target, &table(), &gen, seed).unwrap();
        prop_assert_eq!(bundle.tensors.len(), layers * 7 * 2);
        for layer in 0..layers {
            for (kind, d) in &target.dims {
                let a = &bundle.tensors[&tensor_name(layer, *kind, Role::A)];
                let b = &bundle.tensors[&tensor_name(layer, *kind, Role::B)];
                prop_assert_eq!(a.shape(), (rank, d.in_dim));
                prop_assert_eq!(b.shape(), (d.out_dim, rank));
                prop_assert_eq!((b * a).shape(), (d.out_dim, d.in_dim));
                if zero_b {
                    prop_assert!(b.iter().all(|v| *v == 0.0));
                    prop_assert!((b * a).iter().all(|v| *v == 0.0));
                }
                let template = &bundle.templates[&(*kind, Role::A)];
                for row in a.row_iter() {
                    let changed = row.iter().zip(template).filter(|(x, y)| x != y).count();
                    prop_assert!(changed <= d.in_dim);
                }
            }
        }
    }

    #[test]
    fn digest_tracks_every_tensor(seed in any::<u64>(), pick in 0usize..28, entry in 0usize..8) {
        let target = LoraTargetSpec::llama_like("t", 2, 8, 4, 16, 2);
        let gen = GeneratorConfig::new(64, 64, CountLaw::pareto_default(64), 0);
        let bundle = reshape_lora_init(&target, &table(), &gen, seed).unwrap();
        let base = tensor_digest(&bundle.tensors);
        prop_assert_eq!(&base, &bundle.manifest.tensor_digest);
        let mut tensors = bundle.tensors.clone();
        let name = tensors.keys().nth(pick).unwrap().clone();
        let t = tensors.get_mut(&name).unwrap();
        let i = entry % t.len();
        t[i] += 1.0;
        prop_assert_ne!(tensor_digest(&tensors), base);
    }
}

/// Rows of each lora_A differ from the kind's template exactly where the
/// generator perturbed them, i.e. in at most `p` positions with `p` bounded
/// by the count law's clamp. Checked on a wide target where `p << in_dim`.
#[test]
fn reshape_rows_are_sparse_perturbations() {
    let target = LoraTargetSpec::llama_like("t", 4, 512, 128, 1024, 8);
    let gen = GeneratorConfig::new(64, 64, CountLaw::pareto_default(64), 0);
    let bundle = reshape_lora_init(&target, &table(), &gen, 1).unwrap();
    let mut changed_fraction = Vec::new();
    for layer in 0..4 {
        for (kind, d) in &target.dims {
            let template = &bundle.templates[&(*kind, Role::A)];
            for row in bundle.tensors[&tensor_name(layer, *kind, Role::A)].row_iter() {
                let changed = row.iter().zip(template).filter(|(x, y)| x != y).count();
                changed_fraction.push(changed as f64 / d.in_dim as f64);
            }
        }
    }
    changed_fraction.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = changed_fraction[changed_fraction.len() / 2];
    assert!((0.02..0.10).contains(&median), "median changed fraction {median}");
}
