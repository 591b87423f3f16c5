use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use steerbench_core::metrics::*;
use steerbench_core::schema::*;

fn episode() -> Vec<InteractionRecord> {
    include_str!("fixtures/episode.jsonl")
        .lines()
        .map(|l| parse_record(l).unwrap())
        .collect()
}

fn close(a: Option<f64>, b: f64) {
    let a = a.expect("metric present");
    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
}

#[test]
fn fixture_overall_values() {
    let r = aggregate(&episode(), 2, Split::All, 2).unwrap();
    let v = r.overall;
    assert_eq!(v.n, 4);
    close(v.tai, 0.5);
    close(v.cas, (2.0 / 3.0 + 1.0 + 0.0 + 0.8) / 4.0);
    close(v.psc, (0.5f64.sqrt() + 1.0 + 0.0 + 1.0) / 4.0);
    close(v.iqa, (1.0 + 0.7 + 0.3) / 3.0);
}

#[test]
fn fixture_split_and_period_values() {
    let records = episode();
    let seen = aggregate(&records, 2, Split::Seen, 2).unwrap().overall;
    assert_eq!(seen.n, 3);
    close(seen.tai, 1.0 / 3.0);
    close(seen.cas, (2.0 / 3.0 + 0.8) / 3.0);
    close(seen.psc, (0.5f64.sqrt() + 1.0) / 3.0);
    close(seen.iqa, 0.65);

    let unseen = aggregate(&records, 2, Split::Unseen, 2).unwrap().overall;
    close(unseen.tai, 1.0);
    close(unseen.iqa, 0.7);

    let all = aggregate(&records, 2, Split::All, 2).unwrap();
    close(all.per_period[0].tai, 1.0);
    close(all.per_period[0].cas, (2.0 / 3.0 + 1.0) / 2.0);
    close(all.per_period[0].iqa, 0.85);
    close(all.per_period[1].tai, 0.0);
    close(all.per_period[1].psc, 0.5);
    assert_eq!(all.window, all.per_period[1]);
}

#[test]
fn fixture_csv_rows() {
    let r = aggregate(&episode(), 2, Split::All, 2).unwrap();
    let csv = to_csv(&[r]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines[1], "all,0,0.833333,0.853553,1.000000,0.850000,2");
    assert_eq!(lines[3], "all,all,0.616667,0.676777,0.500000,0.666667,4");
    assert!(lines[4].starts_with("all,last2,"));
}

#[test]
fn single_metric_functions() {
    let set = |cs: &[PreferenceCategory]| cs.iter().copied().collect::<CategorySet>();
    use PreferenceCategory::*;
    assert_eq!(cas(set(&[]), set(&[])), 1.0);
    assert_eq!(cas(set(&[Autonomy]), set(&[])), 0.0);
    assert!((cas(set(&[Scheduling, Autonomy]), set(&[Scheduling])) - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(iqa(&[5, 5, 5, 5, 5]).unwrap(), 1.0);
    assert_eq!(iqa(&[1, 1, 1, 1, 1]).unwrap(), 0.0);
    assert!(iqa(&[0, 1, 1, 1, 1]).is_err());
    assert!((psc("brief later", "brief").unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    assert!(psc("", "brief").is_err());
    assert!(tai(&[]).is_err());
}

#[test]
fn aggregate_rejects_bad_inputs() {
    let records = episode();
    assert!(aggregate(&records, 1, Split::All, 2).is_err());
    let seen_only: Vec<_> = records.iter().filter(|r| r.split == Split::Seen).cloned().collect();
    assert!(aggregate(&seen_only, 2, Split::Unseen, 2).is_err());
}

#[test]
fn tai_of_independent_policies_matches_closed_form() {
    let template = episode().remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for (p, q) in [(0.5, 0.5), (0.3, 0.8), (0.9, 0.2), (0.1, 0.1)] {
        let records: Vec<_> = (0..10_000)
            .map(|_| {
                let mut r = template.clone();
                r.assistant_decision = if rng.random_bool(p) { Decision::Intervene } else { Decision::Silent };
                r.user_welcome = Welcome::from_bool(rng.random_bool(q));
                r
            })
            .collect();
        let expected = p * q + (1.0 - p) * (1.0 - q);
        let got = tai(&records).unwrap();
        assert!((got - expected).abs() <= 0.02, "p={p} q={q}: {got} vs {expected}");
    }
}

#[test]
fn embedding_is_unit_and_keyword_aligned() {
    let e = Embedder::default();
    let v = e.embed("keep it brief and timely").unwrap();
    let n: f64 = v.iter().map(|x| x * x).sum();
    assert!((n - 1.0).abs() < 1e-12);
    assert_eq!(e.bucket("brief"), e.bucket("concise"));
    assert_ne!(e.bucket("brief"), e.bucket("detailed"));
    assert!(e.bucket("kitchen") >= 10);
}
