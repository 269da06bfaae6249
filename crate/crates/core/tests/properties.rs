//! Property tests for the invariants of each stage.

use proptest::prelude::*;
use proptest::sample::SizeRange;

use vlmaudit_core::analysis::{
    average_vectors, dominant_index, gender_volatility, mine_intersections, population_stddev, skew_flags,
    DimensionScores, ModelRoleAudit, RoleAudit,
};
use vlmaudit_core::corpus::embeddings::{decode, encode, load_embeddings, write_embeddings, EmbeddingMatrix, Kind, Manifest};
use vlmaudit_core::corpus::labels::{consolidate_age, AgeBand, AgeBucket, Gender, Label, LabelTable, Race};
use vlmaudit_core::corpus::taxonomy::{render_prompts, Taxonomy, PROMPT_PREFIX};
use vlmaudit_core::metrics::{
    bias_against_uniform, demographic_distribution, js_divergence, kl_divergence, Dimension, ProbVector,
};
use vlmaudit_core::retrieval::{cosine_similarity, normalize, top_k, top_k_batch, Hit};

const LN_2: f64 = std::f64::consts::LN_2;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("img{i}")).collect()
}

fn matrix(dim: usize, rows: &[Vec<f32>]) -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(dim, rows).unwrap()
}

/// Full sort of every similarity: descending, ties by ascending row.
fn oracle(images: &EmbeddingMatrix, prompt: &[f32], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = images
        .rows()
        .enumerate()
        .map(|(i, v)| (i, cosine_similarity(v, prompt).unwrap().value()))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Small-integer coordinates so that exact ties and duplicate rows are common.
fn corpus() -> impl Strategy<Value = (usize, Vec<Vec<f32>>, Vec<f32>, usize)> {
    (1usize..=8, 1usize..=120).prop_flat_map(|(dim, n)| {
        let row = prop::collection::vec(-3i8..=3, dim).prop_filter("non-zero", |r| r.iter().any(|&x| x != 0));
        (
            Just(dim),
            prop::collection::vec(row.clone(), n),
            row,
            1usize..=n,
        )
            .prop_map(|(dim, rows, prompt, k)| {
                let f = |r: Vec<i8>| r.into_iter().map(f32::from).collect::<Vec<f32>>();
                (dim, rows.into_iter().map(f).collect(), f(prompt), k)
            })
    })
}

fn simplex(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0f64..1.0], c)
        .prop_filter("non-zero mass", |w| w.iter().sum::<f64>() > 1e-6)
        .prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
}

fn counts_vector(dimension: Dimension, size: impl Into<SizeRange>) -> impl Strategy<Value = ProbVector> {
    let c = dimension.len();
    prop::collection::vec(0u32..50, size)
        .prop_map(move |mut v| {
            v.resize(c, 0);
            v
        })
        .prop_filter("non-empty", |v| v.iter().any(|&x| x > 0))
        .prop_map(move |v| {
            let k: u32 = v.iter().sum();
            ProbVector::new(dimension, v.iter().map(|&x| f64::from(x) / f64::from(k)).collect()).unwrap()
        })
}

fn audit_of(model: usize, gender: ProbVector, race: ProbVector, age: ProbVector, joint: ProbVector) -> ModelRoleAudit {
    ModelRoleAudit {
        model_id: format!("m{model}"),
        k: 100,
        bias: DimensionScores {
            gender: bias_against_uniform(&gender),
            race: bias_against_uniform(&race),
            age: bias_against_uniform(&age),
            joint: bias_against_uniform(&joint),
        },
        gender,
        race,
        age,
        joint,
    }
}

fn model_audits(max_models: usize) -> impl Strategy<Value = Vec<ModelRoleAudit>> {
    prop::collection::vec(
        (
            counts_vector(Dimension::Gender, 2),
            counts_vector(Dimension::Race, 7),
            counts_vector(Dimension::Age, 3),
            counts_vector(Dimension::Joint, 42),
        ),
        1..=max_models,
    )
    .prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (g, r, a, j))| audit_of(i, g, r, a, j))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn top_k_matches_full_sort((dim, rows, prompt, k) in corpus()) {
        let images = normalize(matrix(dim, &rows)).unwrap();
        let prompt = normalize(matrix(dim, &[prompt])).unwrap();
        let manifest = Manifest::new("m", Kind::Image, ids(rows.len()), &images);
        let hits = top_k(&images, &manifest, prompt.row(0), k).unwrap();
        let got: Vec<(usize, f64)> = hits.iter().map(|h| (h.row, h.similarity)).collect();
        prop_assert_eq!(got, oracle(&images, prompt.row(0), k));
        for h in &hits {
            prop_assert_eq!(&h.image_id, &manifest.ids[h.row]);
        }
    }

    #[test]
    fn batch_matches_single_prompt((dim, rows, prompt, k) in corpus(), extra in prop::collection::vec(-3i8..=3, 1..=8)) {
        let mut second: Vec<f32> = extra.iter().map(|&x| f32::from(x)).collect();
        second.resize(dim, 1.0);
        if second.iter().all(|&x| x == 0.0) {
            second[0] = 1.0;
        }
        let images = normalize(matrix(dim, &rows)).unwrap();
        let prompts = normalize(matrix(dim, &[prompt, second])).unwrap();
        let manifest = Manifest::new("m", Kind::Image, ids(rows.len()), &images);
        let batch = top_k_batch(&images, &manifest, &prompts, k).unwrap();
        for (p, hits) in batch.iter().enumerate() {
            prop_assert_eq!(hits, &top_k(&images, &manifest, prompts.row(p), k).unwrap());
        }
    }

    #[test]
    fn power_of_two_scaling_leaves_results_identical(
        (dim, rows, prompt, k) in corpus(),
        exps in prop::collection::vec(-20i32..=20, 120),
    ) {
        let scaled: Vec<Vec<f32>> = rows
            .iter()
            .zip(&exps)
            .map(|(r, &e)| r.iter().map(|&x| x * 2f32.powi(e)).collect())
            .collect();
        let prompt = normalize(matrix(dim, &[prompt])).unwrap();
        let a = normalize(matrix(dim, &rows)).unwrap();
        let b = normalize(matrix(dim, &scaled)).unwrap();
        let manifest = Manifest::new("m", Kind::Image, ids(rows.len()), &a);
        prop_assert_eq!(
            top_k(&a, &manifest, prompt.row(0), k).unwrap(),
            top_k(&b, &manifest, prompt.row(0), k).unwrap()
        );
    }

    #[test]
    fn arbitrary_scaling_keeps_separated_id_sets(
        (dim, rows, prompt, k) in corpus(),
        scales in prop::collection::vec(1e-3f32..1e3, 120),
    ) {
        let scaled: Vec<Vec<f32>> = rows.iter().zip(&scales).map(|(r, &s)| r.iter().map(|&x| x * s).collect()).collect();
        let prompt = normalize(matrix(dim, &[prompt])).unwrap();
        let a = normalize(matrix(dim, &rows)).unwrap();
        let b = normalize(matrix(dim, &scaled)).unwrap();
        let manifest = Manifest::new("m", Kind::Image, ids(rows.len()), &a);
        let full = oracle(&a, prompt.row(0), rows.len());
        // Only meaningful when the k-th and (k+1)-th similarities are clearly apart.
        let separated = k == rows.len() || full[k - 1].1 - full[k].1 > 1e-5;
        prop_assume!(separated);
        let set = |hits: Vec<Hit>| {
            let mut v: Vec<usize> = hits.into_iter().map(|h| h.row).collect();
            v.sort_unstable();
            v
        };
        prop_assert_eq!(
            set(top_k(&a, &manifest, prompt.row(0), k).unwrap()),
            set(top_k(&b, &manifest, prompt.row(0), k).unwrap())
        );
    }

    #[test]
    fn permuting_rows_permutes_ids((dim, rows, prompt, k) in corpus(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let n = rows.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let permuted: Vec<Vec<f32>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let permuted_ids: Vec<String> = perm.iter().map(|&i| format!("img{i}")).collect();

        let prompt = normalize(matrix(dim, &[prompt])).unwrap();
        let a = normalize(matrix(dim, &rows)).unwrap();
        let b = normalize(matrix(dim, &permuted)).unwrap();
        let ma = Manifest::new("m", Kind::Image, ids(n), &a);
        let mb = Manifest::new("m", Kind::Image, permuted_ids, &b);
        let ha = top_k(&a, &ma, prompt.row(0), k).unwrap();
        let hb = top_k(&b, &mb, prompt.row(0), k).unwrap();

        // Similarity sequences agree exactly; ids agree wherever no tie is involved.
        let sims = |h: &[Hit]| h.iter().map(|x| x.similarity).collect::<Vec<_>>();
        prop_assert_eq!(sims(&ha), sims(&hb));
        let boundary = ha[k - 1].similarity;
        let above = |h: &[Hit]| {
            let mut v: Vec<String> = h.iter().filter(|x| x.similarity > boundary).map(|x| x.image_id.clone()).collect();
            v.sort();
            v
        };
        prop_assert_eq!(above(&ha), above(&hb));
        for (x, y) in ha.iter().zip(&hb) {
            let tied = ha.iter().filter(|h| h.similarity == x.similarity).count() > 1
                || a.rows().filter(|r| cosine_similarity(r, prompt.row(0)).unwrap().value() == x.similarity).count() > 1;
            if !tied {
                prop_assert_eq!(&x.image_id, &y.image_id);
            }
        }
    }

    #[test]
    fn retrieval_is_deterministic_across_pools((dim, rows, prompt, k) in corpus()) {
        let images = normalize(matrix(dim, &rows)).unwrap();
        let prompts = normalize(matrix(dim, &[prompt])).unwrap();
        let manifest = Manifest::new("m", Kind::Image, ids(rows.len()), &images);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| top_k_batch(&images, &manifest, &prompts, k).unwrap())
        };
        let one = run(1);
        prop_assert_eq!(&one, &run(3));
        prop_assert_eq!(&one, &top_k_batch(&images, &manifest, &prompts, k).unwrap());
    }

    #[test]
    fn similarity_is_bounded((dim, rows, prompt, _k) in corpus()) {
        let images = normalize(matrix(dim, &rows)).unwrap();
        let prompt = normalize(matrix(dim, &[prompt])).unwrap();
        for r in images.rows() {
            prop_assert!(cosine_similarity(r, prompt.row(0)).unwrap().value().abs() <= 1.0 + 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn js_is_symmetric_and_bounded(
        (p, q) in prop::sample::select(vec![2usize, 3, 7, 42]).prop_flat_map(|c| (simplex(c), simplex(c))),
    ) {
        let pq = js_divergence(&p, &q).unwrap();
        prop_assert_eq!(pq, js_divergence(&q, &p).unwrap());
        prop_assert!((0.0..=LN_2).contains(&pq));
        prop_assert_eq!(js_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn js_is_zero_only_for_equal_vectors(p in simplex(7), offset in 1usize..7, frac in 0.0f64..1.0) {
        // Move mass off the largest share, which is at least 1/7.
        let i = dominant_index(&ProbVector::new(Dimension::Race, p.clone()).unwrap());
        let j = (i + offset) % 7;
        let delta = (frac * p[i]).max(1e-4);
        let mut q = p.clone();
        q[i] -= delta;
        q[j] += delta;
        let js = js_divergence(&p, &q).unwrap();
        prop_assert!(js >= 1e-12, "js {js} for max diff {delta}");
        prop_assert!(js_divergence(&p, &p).unwrap() < 1e-12);
    }

    #[test]
    fn kl_is_non_negative(p in simplex(7), q in simplex(7)) {
        let q: Vec<f64> = q.iter().map(|x| 0.5 * x + 0.5 / 7.0).collect();
        prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-15);
    }

    #[test]
    fn distributions_sum_to_one(
        labels in prop::collection::vec((0usize..2, 0usize..7, 0usize..9), 1..300),
    ) {
        let mut table = LabelTable::new();
        let mut hits = Vec::new();
        for (i, &(g, r, a)) in labels.iter().enumerate() {
            let id = format!("f{i}");
            table.insert(id.clone(), Label { gender: Gender::ALL[g], race: Race::ALL[r], age: AgeBand::ALL[a] }).unwrap();
            hits.push(Hit { row: i, image_id: id, similarity: 0.0 });
        }
        for d in [Dimension::Gender, Dimension::Race, Dimension::Age, Dimension::Joint] {
            let v = demographic_distribution(&hits, &table, d).unwrap();
            prop_assert!((v.p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(v.p.iter().all(|&x| x >= 0.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn average_sums_to_one_and_ignores_order(audits in model_audits(6), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = audits.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        for d in [Dimension::Gender, Dimension::Race, Dimension::Age, Dimension::Joint] {
            let a = average_vectors(audits.iter().map(|m| m.vector(d))).unwrap();
            let b = average_vectors(shuffled.iter().map(|m| m.vector(d))).unwrap();
            prop_assert!((a.p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            for (x, y) in a.p.iter().zip(&b.p) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn high_threshold_flags_at_most_once(v in counts_vector(Dimension::Race, 7), t in 0.5000001f64..=1.0) {
        prop_assert!(skew_flags("r", None, &v, t).unwrap().len() <= 1);
    }

    #[test]
    fn dominant_survives_rescaling(v in counts_vector(Dimension::Race, 7), c in prop::sample::select(vec![0.5, 2.0, 3.0, 10.0, 1e-3, 7.5])) {
        let scaled: Vec<f64> = v.p.iter().map(|x| x * c).collect();
        let s: f64 = scaled.iter().sum();
        let renorm = ProbVector::new(Dimension::Race, scaled.iter().map(|x| x / s).collect()).unwrap();
        prop_assert_eq!(dominant_index(&v), dominant_index(&renorm));
    }

    #[test]
    fn volatility_ignores_order_and_is_zero_iff_equal(audits in model_audits(6), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        prop_assume!(audits.len() >= 2);
        let mut shuffled = audits.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = gender_volatility(&[RoleAudit { role: "r".into(), per_model: audits.clone() }]).unwrap();
        let b = gender_volatility(&[RoleAudit { role: "r".into(), per_model: shuffled }]).unwrap();
        prop_assert!((a[0].stddev - b[0].stddev).abs() <= 1e-12);
        let shares: Vec<f64> = audits.iter().map(|m| m.male_share()).collect();
        let all_equal = shares.iter().all(|&s| s == shares[0]);
        prop_assert_eq!(a[0].stddev == 0.0, all_equal);
        prop_assert_eq!(population_stddev(&shares), a[0].stddev);
    }

    #[test]
    fn intersection_recurrence_sums_to_model_count(roles in prop::collection::vec(model_audits(5), 1..4)) {
        let m = roles.iter().map(Vec::len).min().unwrap();
        let audits: Vec<RoleAudit> = roles
            .into_iter()
            .enumerate()
            .map(|(i, mut per_model)| {
                per_model.truncate(m);
                RoleAudit { role: format!("role{i}"), per_model }
            })
            .collect();
        let findings = mine_intersections(&audits);
        for a in &audits {
            let total: usize = findings.iter().filter(|f| f.role == a.role).map(|f| f.recurrence).sum();
            prop_assert_eq!(total, m);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn emb1_round_trips_bit_exactly(
        dim in 1usize..16,
        rows in prop::collection::vec(prop::collection::vec(-1e6f32..1e6, 16), 0..40),
    ) {
        let rows: Vec<Vec<f32>> = rows
            .into_iter()
            .map(|mut r| {
                r.truncate(dim);
                if r.iter().all(|&x| x == 0.0) {
                    r[0] = 1.0;
                }
                r
            })
            .collect();
        let m = EmbeddingMatrix::from_rows(dim, &rows).unwrap();
        let bytes = encode(&m);
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(back.payload_bytes(), m.payload_bytes());
        prop_assert_eq!(back.checksum(), m.checksum());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.emb");
        let manifest = Manifest::new("model", Kind::Image, ids(rows.len()), &m);
        write_embeddings(&path, &m, &manifest).unwrap();
        let (loaded, loaded_manifest) = load_embeddings(&path).unwrap();
        prop_assert_eq!(loaded.payload_bytes(), m.payload_bytes());
        prop_assert_eq!(loaded_manifest, manifest);
    }

    #[test]
    fn prompts_start_with_the_template(names in prop::collection::hash_set("[A-Za-z][A-Za-z ]{0,20}", 1..10)) {
        let names: Vec<String> = names.into_iter().collect();
        let lower: std::collections::HashSet<String> = names.iter().map(|n| n.to_lowercase()).collect();
        prop_assume!(lower.len() == names.len());
        let taxonomy = Taxonomy::flat("Any", &names.iter().map(String::as_str).collect::<Vec<_>>()).unwrap();
        let prompts = render_prompts(&taxonomy);
        prop_assert_eq!(prompts.len(), names.len());
        for (p, n) in prompts.iter().zip(&names) {
            prop_assert!(p.prompt_text.starts_with("Photo of a "));
            prop_assert_eq!(&p.prompt_text[..11], PROMPT_PREFIX);
            prop_assert_eq!(&p.prompt_text[11..], n.to_lowercase());
        }
    }
}

#[test]
fn age_consolidation_partitions_the_bands() {
    let mut seen = [0usize; 3];
    for band in AgeBand::ALL {
        let bucket = consolidate_age(band);
        seen[bucket.index()] += 1;
        let expected = match band {
            AgeBand::A0to2 | AgeBand::A3to9 | AgeBand::A10to19 => AgeBucket::Young,
            AgeBand::A20to29 | AgeBand::A30to39 | AgeBand::A40to49 => AgeBucket::Adult,
            _ => AgeBucket::Old,
        };
        assert_eq!(bucket, expected, "{}", band.name());
    }
    assert_eq!(seen, [3, 3, 3]);
}

#[test]
fn default_taxonomy_renders_33_prompts() {
    let t = Taxonomy::default_healthcare();
    assert_eq!(render_prompts(&t).len(), 33);
}
