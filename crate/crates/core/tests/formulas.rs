use coupling::analysis::{
    adversarial_bound, adversarial_family, collision_report, exact_collision_gumbel,
    exact_collision_wmh, random_pair, worst_case_bound,
};
use coupling::distributions::{sum_min, tv_distance, DiscreteDistribution};
use coupling::SharedRandomSource;
use num::rational::BigRational;
use num::{BigInt, One, Signed, ToPrimitive, Zero};
use proptest::prelude::*;

fn pair_source(i: u64) -> SharedRandomSource {
    SharedRandomSource::new(0xF0F0, "formula-pairs").derive(&format!("pair-{i}"))
}

/// `random_pair` with `n` drawn uniformly from `2..=32`.
fn sized_pair(i: u64) -> (DiscreteDistribution, DiscreteDistribution) {
    let src = pair_source(i);
    let n = 2 + (src.uniform_at(0) * 31.0) as usize;
    random_pair(n, &src.derive("weights")).unwrap()
}

#[test]
fn pareto_chain_on_random_pairs() {
    let mut strict_cases = 0;
    let mut strict_misses = 0;
    for i in 0..1000 {
        let (p, q) = sized_pair(i);
        let wmh = exact_collision_wmh(&p, &q).unwrap();
        let gumbel = exact_collision_gumbel(&p, &q).unwrap();
        let bound = worst_case_bound(&p, &q).unwrap();
        let optimal = 1.0 - tv_distance(&p, &q).unwrap();
        assert!(
            gumbel >= wmh - 1e-12,
            "pair {i}: gumbel {gumbel} < wmh {wmh}"
        );
        assert!(bound <= wmh + 1e-12, "pair {i}");
        assert!(gumbel <= optimal + 1e-12, "pair {i}");
        collision_report(&p, &q).unwrap();

        let differing = p
            .probs()
            .iter()
            .zip(q.probs())
            .filter(|(a, b)| (*a - *b).abs() > 1e-9)
            .count();
        if differing >= 3 && sum_min(&p, &q).unwrap() > 0.0 {
            strict_cases += 1;
            if gumbel <= wmh + 1e-12 {
                strict_misses += 1;
            }
        }
    }
    eprintln!("strict dominance: {strict_misses} of {strict_cases} eligible pairs were not strict");
}

#[test]
fn two_items_are_optimal() {
    let src = SharedRandomSource::new(2, "two-items");
    for i in 0..100u64 {
        let s = src.derive(&format!("pair-{i}"));
        let p = DiscreteDistribution::from_weights(&[s.uniform_at(0), s.uniform_at(1)]).unwrap();
        let q = DiscreteDistribution::from_weights(&[s.uniform_at(2), s.uniform_at(3)]).unwrap();
        let gumbel = exact_collision_gumbel(&p, &q).unwrap();
        let optimal = 1.0 - tv_distance(&p, &q).unwrap();
        assert!(
            (gumbel - optimal).abs() <= 1e-12,
            "pair {i}: {gumbel} vs {optimal}"
        );
    }
    let p = DiscreteDistribution::from_weights(&[0.25, 0.75]).unwrap();
    let q = DiscreteDistribution::uniform(2).unwrap();
    assert!((exact_collision_gumbel(&p, &q).unwrap() - 0.75).abs() <= 1e-12);
}

#[test]
fn uniform_subsets_give_jaccard() {
    let src = SharedRandomSource::new(6, "jaccard");
    let mut tested = 0;
    let mut i = 0u64;
    while tested < 50 {
        let s = src.derive(&format!("subsets-{i}"));
        i += 1;
        let a: Vec<usize> = (0..32).filter(|&k| s.uniform_at(k as u64) < 0.5).collect();
        let b: Vec<usize> = (0..32)
            .filter(|&k| s.uniform_at(32 + k as u64) < 0.5)
            .collect();
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let inter = a.iter().filter(|k| b.contains(k)).count();
        let union = a.len() + b.len() - inter;
        let p = DiscreteDistribution::uniform_on(32, &a).unwrap();
        let q = DiscreteDistribution::uniform_on(32, &b).unwrap();
        let g = exact_collision_gumbel(&p, &q).unwrap();
        assert!(
            (g - inter as f64 / union as f64).abs() <= 1e-12,
            "{a:?} {b:?}"
        );
        tested += 1;
    }
}

#[test]
fn adversarial_family_saturates_the_bound() {
    for d in 2..=10usize {
        let family = adversarial_family(d).unwrap();
        assert_eq!(family.len(), d + 1);
        let mut min_gumbel = f64::INFINITY;
        let mut min_wmh = f64::INFINITY;
        for i in 0..=d {
            assert_eq!(family[i].prob(i), 0.0);
            for j in i + 1..=d {
                let tv = tv_distance(&family[i], &family[j]).unwrap();
                assert!((tv - 1.0 / d as f64).abs() <= 1e-15, "d={d}: tv {tv}");
                min_gumbel =
                    min_gumbel.min(exact_collision_gumbel(&family[i], &family[j]).unwrap());
                min_wmh = min_wmh.min(exact_collision_wmh(&family[i], &family[j]).unwrap());
            }
        }
        assert!(min_gumbel <= adversarial_bound(d) + 1e-12, "d={d}");
        assert!(min_wmh <= adversarial_bound(d) + 1e-12, "d={d}");
    }
    assert!((adversarial_bound(2) - 1.0 / 3.0).abs() < 1e-15);
    assert!((adversarial_bound(5) - 2.0 / 3.0).abs() < 1e-15);
    assert!(adversarial_family(1).is_err());
}

// Exact rational oracles, derived from the sampling processes themselves.

fn rationals(w: &[u32]) -> Vec<BigRational> {
    let total: u32 = w.iter().sum();
    w.iter()
        .map(|&x| BigRational::new(BigInt::from(x), BigInt::from(total)))
        .collect()
}

fn r_tv(p: &[BigRational], q: &[BigRational]) -> BigRational {
    let sum = p
        .iter()
        .zip(q)
        .fold(BigRational::zero(), |acc, (a, b)| acc + (a - b).abs());
    sum / BigRational::from_integer(BigInt::from(2))
}

/// The first dart landing in either party's region decides the outcome. A
/// hit in the shared part of cell j is a collision at j; a hit in Alice's
/// excess over Bob at j stops Alice at j, and Bob, restarting, then lands
/// on j with probability q_j (and symmetrically for Bob's excess).
fn r_wmh(p: &[BigRational], q: &[BigRational]) -> BigRational {
    let zero = BigRational::zero();
    let mut hit = zero.clone();
    let mut union = zero.clone();
    for (pj, qj) in p.iter().zip(q) {
        let lo = pj.min(qj).clone();
        let alice_excess = if pj > qj { pj - qj } else { zero.clone() };
        let bob_excess = if qj > pj { qj - pj } else { zero.clone() };
        hit += lo + alice_excess * qj + bob_excess * pj;
        union += pj.max(qj).clone();
    }
    hit / union
}

/// Exponential race: with E_i i.i.d. Exp(1), both pick j iff every
/// E_i > E_j·max(p_i/p_j, q_i/q_j); integrating over E_j gives
/// 1 / (1 + Σ_{i≠j} max(..)).
fn r_gumbel(p: &[BigRational], q: &[BigRational]) -> BigRational {
    let mut total = BigRational::zero();
    for j in 0..p.len() {
        if p[j].is_zero() || q[j].is_zero() {
            continue;
        }
        let mut rate = BigRational::one();
        for i in (0..p.len()).filter(|&i| i != j) {
            let a = &p[i] / &p[j];
            let b = &q[i] / &q[j];
            rate += a.max(b);
        }
        total += rate.recip();
    }
    total
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap()
}

#[test]
fn worked_example_is_exact() {
    let p = rationals(&[1, 1, 0]);
    let q = rationals(&[1, 1, 1]);
    let third = BigRational::new(1.into(), 3.into());
    assert_eq!(r_tv(&p, &q), third);
    assert_eq!(r_wmh(&p, &q), BigRational::new(7.into(), 12.into()));
    assert_eq!(r_gumbel(&p, &q), BigRational::new(2.into(), 3.into()));

    let fp = DiscreteDistribution::from_weights(&[1.0, 1.0, 0.0]).unwrap();
    let fq = DiscreteDistribution::uniform(3).unwrap();
    let report = collision_report(&fp, &fq).unwrap();
    assert!((report.tv - to_f64(&third)).abs() <= 1e-12);
    assert!((report.worst_case_bound - 0.5).abs() <= 1e-12);
    assert!((report.exact_wmh - to_f64(&r_wmh(&p, &q))).abs() <= 1e-12);
    assert!((report.exact_gumbel - to_f64(&r_gumbel(&p, &q))).abs() <= 1e-12);
    assert!((report.exact_optimal - 2.0 / 3.0).abs() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn small_pairs_match_rational_oracle(
        (pw, qw) in (2usize..=4).prop_flat_map(|n| {
            let side = prop::collection::vec(0u32..20, n).prop_filter("mass", |w| w.iter().any(|&x| x > 0));
            (side.clone(), side)
        })
    ) {
        let p = rationals(&pw);
        let q = rationals(&qw);
        let fp = DiscreteDistribution::from_weights(&pw.iter().map(|&x| x as f64).collect::<Vec<_>>()).unwrap();
        let fq = DiscreteDistribution::from_weights(&qw.iter().map(|&x| x as f64).collect::<Vec<_>>()).unwrap();
        prop_assert!((tv_distance(&fp, &fq).unwrap() - to_f64(&r_tv(&p, &q))).abs() <= 1e-12);
        prop_assert!((exact_collision_wmh(&fp, &fq).unwrap() - to_f64(&r_wmh(&p, &q))).abs() <= 1e-12);
        prop_assert!((exact_collision_gumbel(&fp, &fq).unwrap() - to_f64(&r_gumbel(&p, &q))).abs() <= 1e-12);
    }
}
