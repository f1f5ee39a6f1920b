use approx::{assert_abs_diff_eq, assert_relative_eq};
use mohe::data::{parse_items, parse_sessions, path_label, EventKind};
use mohe::metrics::bootstrap_compare;
use mohe::par::Exec;
use mohe::reach::{dirichlet_mle, estimate_theta, inv_digamma, trigamma};
use mohe::variance::{conditional_variances, random_spd};
use mohe::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use statrs::function::gamma::digamma;

fn draws<const K: usize>(alpha: [f64; K], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = Dirichlet::new(alpha).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| d.sample(&mut rng).to_vec()).collect()
}

#[test]
fn flat_dirichlet_is_recovered() {
    let a = dirichlet_mle(&draws([1.0, 1.0], 5000, 3)).unwrap();
    for v in a {
        assert_relative_eq!(v, 1.0, max_relative = 0.1);
    }
}

#[test]
fn mle_tracks_precision_at_fixed_mean() {
    // same mean, precision 5 vs 50: the fitted alphas keep the ratio
    let lo = dirichlet_mle(&draws([1.0, 2.5, 1.5], 8000, 1)).unwrap();
    let hi = dirichlet_mle(&draws([10.0, 25.0, 15.0], 8000, 2)).unwrap();
    let (s_lo, s_hi): (f64, f64) = (lo.iter().sum(), hi.iter().sum());
    assert_relative_eq!(s_hi / s_lo, 10.0, max_relative = 0.08);
    for (a, b) in lo.iter().zip(&hi) {
        assert_abs_diff_eq!(a / s_lo, b / s_hi, epsilon = 0.02);
    }
}

#[test]
fn mle_rejects_bad_samples() {
    assert!(matches!(dirichlet_mle(&[vec![0.5, 0.5]]), Err(Error::Input(_))));
    assert!(matches!(dirichlet_mle(&[vec![0.0, 1.0], vec![0.5, 0.5]]), Err(Error::Input(_))));
}

#[test]
fn special_functions_invert_and_differentiate() {
    for &x in &[0.05, 0.3, 1.0, 2.5, 9.0, 40.0] {
        assert_relative_eq!(inv_digamma(digamma(x)), x, max_relative = 1e-10);
        let h = 1e-5 * x;
        let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
        assert_relative_eq!(trigamma(x), fd, max_relative = 1e-6);
    }
    assert_relative_eq!(trigamma(1.0), std::f64::consts::PI.powi(2) / 6.0, max_relative = 1e-12);
}

#[test]
fn theta_uses_add_one_only_with_zeros() {
    assert_eq!(estimate_theta(&[3, 1]).unwrap(), vec![0.75, 0.25]);
    assert_eq!(estimate_theta(&[3, 0]).unwrap(), vec![0.8, 0.2]);
}

#[test]
fn conditional_variance_matches_precision_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for n in [2, 3, 6] {
        let cov = random_spd(n, &mut rng);
        let inv = cov.clone().try_inverse().unwrap();
        let cond = conditional_variances(&cov).unwrap();
        for t in 0..n {
            assert_relative_eq!(cond[t], 1.0 / inv[(t, t)], max_relative = 1e-9);
        }
    }
}

#[test]
fn bootstrap_interval_is_stable_at_large_resample_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gold: Vec<usize> = (0..300).map(|_| rng.random_range(0..3)).collect();
    let noisy = |rate: f64, rng: &mut ChaCha8Rng| -> Vec<usize> {
        gold.iter().map(|&g| if rng.random_bool(rate) { (g + 1) % 3 } else { g }).collect()
    };
    let a = noisy(0.3, &mut rng);
    let b = noisy(0.2, &mut rng);
    let r1 = bootstrap_compare(&a, &b, &gold, 3, 10_000, 0.95, 1, Exec::Parallel).unwrap();
    let r2 = bootstrap_compare(&a, &b, &gold, 3, 10_000, 0.95, 2, Exec::Parallel).unwrap();
    assert_abs_diff_eq!(r1.delta_interval.0, r2.delta_interval.0, epsilon = 0.01);
    assert_abs_diff_eq!(r1.delta_interval.1, r2.delta_interval.1, epsilon = 0.01);
    assert!(r1.delta_interval.0 <= r1.observed_delta && r1.observed_delta <= r1.delta_interval.1);
    assert!(matches!(
        bootstrap_compare(&a, &b, &gold, 3, 999, 0.95, 1, Exec::Parallel),
        Err(Error::Config(_))
    ));
}

const ITEMS: &str = r#"{"id":"a1","title":"Red leather sandal","genre_path":["Shoes","Sandals"],"shop_id":"s9","purchase_flag":true}
{"id":"a2","title":"Canvas tote","genre_path":["Bags"],"tag_ids":["t1","t2"]}
{"id":"a3","title":"Wool scarf","genre_path":["Fashion","Accessories","Scarves"],"description_tokens":[["warm","ADJ"],["is","VERB"]]}
"#;

#[test]
fn golden_item_fixture() {
    let got = parse_items(ITEMS, 0).unwrap();
    assert!(got.errors.is_empty());
    let r = &got.records;
    assert_eq!(r.iter().map(|i| i.id.as_str()).collect::<Vec<_>>(), ["a1", "a2", "a3"]);
    assert_eq!(r[0].shop_id.as_deref(), Some("s9"));
    assert!(r[0].purchased_or_carted() && !r[1].purchased_or_carted());
    assert_eq!(r[1].tag_ids.as_deref(), Some(&["t1".to_string(), "t2".to_string()][..]));
    assert_eq!(path_label(&r[2].genre_path, Some(2)), "Fashion > Accessories");
    assert_eq!(path_label(&r[2].genre_path, None), "Fashion > Accessories > Scarves");
}

#[test]
fn malformed_lines_count_against_the_budget() {
    let text = format!("{ITEMS}not json\n{{\"id\":\"a4\",\"title\":\"x\",\"genre_path\":[]}}\n");
    let got = parse_items(&text, 2).unwrap();
    assert_eq!(got.records.len(), 3);
    assert_eq!(got.errors.iter().map(|e| e.line).collect::<Vec<_>>(), vec![4, 5]);
    assert!(matches!(parse_items(&text, 1), Err(Error::Parse { .. })));
}

#[test]
fn sessions_require_ordered_timestamps() {
    let ok = r#"{"session_id":"s","user_hash":"u","events":[{"timestamp":1,"type":"search","query":"shoes"},{"timestamp":2,"type":"purchase","item_id":"a1"}]}"#;
    let back = r#"{"session_id":"t","user_hash":"u","events":[{"timestamp":3,"type":"search","query":"q"},{"timestamp":2,"type":"click","item_id":"a1"}]}"#;
    let got = parse_sessions(&format!("{ok}\n{back}\n"), 1).unwrap();
    assert_eq!(got.records.len(), 1);
    assert_eq!(got.records[0].events[1].kind, EventKind::Purchase);
    assert_eq!(got.errors[0].line, 2);
}
