use coupling::analysis::random_pair;
use coupling::distributions::{discretize, grid_denominator, tv_distance, GridDistribution};
use coupling::exec::{count_where, Execution};
use coupling::lowcomm::{
    bit_cost, run_lowcomm, run_protocol4, session_source, simulate, LowCommSetup, Message, Party,
    Transcript,
};
use coupling::numeric::ceil_log2;
use coupling::{CouplingError, DiscreteDistribution, SharedRandomSource};
use proptest::prelude::*;

fn dist(w: &[f64]) -> DiscreteDistribution {
    DiscreteDistribution::from_weights(w).unwrap()
}

fn sigma(rate: f64, trials: u64) -> f64 {
    (rate * (1.0 - rate) / trials as f64).sqrt()
}

fn token(sender: Party, m: &Message) -> char {
    match (sender, m) {
        (Party::Alice, Message::Propose { .. }) => 'P',
        (Party::Bob, Message::Approve) => 'A',
        (Party::Bob, Message::Reject) => 'R',
        (Party::Bob, Message::Dart { .. }) => 'D',
        (Party::Alice, Message::Reject) => 'r',
        (Party::Alice, Message::Approve) => 'a',
        _ => '?',
    }
}

/// `PA | PR (Dr)* Da`
fn grammar_oracle(s: &str) -> bool {
    if s == "PA" {
        return true;
    }
    let Some(mut rest) = s.strip_prefix("PR") else {
        return false;
    };
    while let Some(r) = rest.strip_prefix("Dr") {
        rest = r;
    }
    rest == "Da"
}

fn any_message() -> impl Strategy<Value = (Party, Message)> {
    let party = prop_oneof![Just(Party::Alice), Just(Party::Bob)];
    let msg = prop_oneof![
        (0usize..8, 0u64..=160).prop_map(|(index, prob_numerator)| Message::Propose {
            index,
            prob_numerator
        }),
        Just(Message::Approve),
        Just(Message::Reject),
        (0usize..8, 0u64..=160).prop_map(|(index, cum_numerator)| Message::Dart {
            index,
            cum_numerator
        }),
    ];
    (party, msg)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn grammar_matches_oracle(msgs in prop::collection::vec(any_message(), 0..9)) {
        let s: String = msgs.iter().map(|(p, m)| token(*p, m)).collect();
        let t = Transcript::new(msgs, 8, 160);
        prop_assert_eq!(t.check_complete().is_ok(), grammar_oracle(&s), "{}", s);
    }
}

fn valid_transcript(n: usize, d: u64) -> impl Strategy<Value = Transcript> {
    let dart = (0..n, 0..=d);
    (
        0..n,
        0..=d,
        prop::option::of(prop::collection::vec(dart, 1..6)),
    )
        .prop_map(move |(a, pa, darts)| {
            let mut msgs = vec![(
                Party::Alice,
                Message::Propose {
                    index: a,
                    prob_numerator: pa,
                },
            )];
            match darts {
                None => msgs.push((Party::Bob, Message::Approve)),
                Some(ds) => {
                    msgs.push((Party::Bob, Message::Reject));
                    let last = ds.len() - 1;
                    for (k, (j, w)) in ds.into_iter().enumerate() {
                        msgs.push((
                            Party::Bob,
                            Message::Dart {
                                index: j,
                                cum_numerator: w,
                            },
                        ));
                        let verdict = if k == last {
                            Message::Approve
                        } else {
                            Message::Reject
                        };
                        msgs.push((Party::Alice, verdict));
                    }
                }
            }
            Transcript::new(msgs, n, d)
        })
}

proptest! {
    #[test]
    fn bit_encoding_round_trips(
        (t, n, d) in (2usize..300, 1u64..100_000).prop_flat_map(|(n, d)| (valid_transcript(n, d), Just(n), Just(d)))
    ) {
        t.check_complete().unwrap();
        let (bytes, len) = t.encode_bits(n, d);
        prop_assert_eq!(len, t.total_bits());
        prop_assert_eq!(bytes.len() as u64, len.div_ceil(8));
        let back = Transcript::decode_bits(&bytes, len, n, d).unwrap();
        prop_assert_eq!(back, t);
    }
}

#[test]
fn fuzzed_sessions_follow_the_grammar() {
    let (p, q) = random_pair(12, &SharedRandomSource::new(8, "fuzz")).unwrap();
    let setup = LowCommSetup::new(&p, &q, 0.1).unwrap();
    let d = setup.denominator();
    let bad = count_where(100_000, Execution::Parallel, |t| {
        let r = setup.run(&session_source(13, t))?;
        let tr = &r.transcript;
        let s: String = tr.messages().iter().map(|(p, m)| token(*p, m)).collect();
        let in_range = tr.messages().iter().all(|(_, m)| match m {
            Message::Propose {
                index,
                prob_numerator,
            } => *index < 12 && *prob_numerator <= d,
            Message::Dart {
                index,
                cum_numerator,
            } => *index < 12 && *cum_numerator <= d,
            _ => true,
        });
        let darts_consistent = tr.messages().iter().all(|(_, m)| match m {
            Message::Dart {
                index,
                cum_numerator,
            } => *cum_numerator == setup.q_grid().numerators()[..*index].iter().sum::<u64>(),
            _ => true,
        });
        Ok(!(grammar_oracle(&s) && in_range && darts_consistent && tr.check_complete().is_ok()))
    })
    .unwrap();
    assert_eq!(bad, 0);
}

#[test]
fn identical_grids_use_two_messages() {
    let p = dist(&[0.2, 0.3, 0.5]);
    let setup = LowCommSetup::new(&p, &p, 0.1).unwrap();
    for t in 0..2000 {
        let r = setup.run(&session_source(1, t)).unwrap();
        assert_eq!(r.transcript.len(), 2);
        assert_eq!(r.transcript.dart_rounds(), 0);
        assert_eq!(r.a_grid, r.b_grid);
    }
}

#[test]
fn disjoint_grids_always_throw_once() {
    let p = dist(&[1.0, 0.0]);
    let q = dist(&[0.0, 1.0]);
    let setup = LowCommSetup::new(&p, &q, 0.1).unwrap();
    for t in 0..2000 {
        let r = setup.run(&session_source(2, t)).unwrap();
        assert_eq!((r.a_grid, r.b_grid), (0, 1));
        assert_eq!(r.transcript.dart_rounds(), 1);
        assert_eq!(r.transcript.len(), 4);
    }
}

#[test]
fn worked_pair_grid_match_rate() {
    let p = dist(&[1.0, 1.0, 0.0]);
    let q = dist(&[1.0, 1.0, 1.0]);
    let setup = LowCommSetup::new(&p, &q, 0.04).unwrap();
    let tally = simulate(&setup, 100_000, 17, Execution::Parallel).unwrap();
    let expected = 1.0 - tv_distance(setup.p_rounded(), setup.q_rounded()).unwrap();
    let s = sigma(expected, 100_000);
    assert!(
        (tally.grid_match_rate() - expected).abs() <= 3.0 * s,
        "{} vs {expected}",
        tally.grid_match_rate()
    );
    let tv = tv_distance(&p, &q).unwrap();
    assert!(tally.match_rate() >= 1.0 - tv - 0.04 - 3.0 * sigma(tally.match_rate(), 100_000));
}

#[test]
fn identical_inputs_still_match_often() {
    let p = dist(&[0.123, 0.456, 0.321, 0.1]);
    let setup = LowCommSetup::new(&p, &p, 0.05).unwrap();
    let tally = simulate(&setup, 50_000, 4, Execution::Parallel).unwrap();
    assert!(tally.match_rate() >= 1.0 - 0.05 - 3.0 * sigma(tally.match_rate(), 50_000));
    assert_eq!(tally.mean_messages(), 2.0);
}

#[test]
fn dart_rounds_average_one() {
    let mut checked = 0;
    for i in 0..6 {
        let (p, q) = random_pair(16, &SharedRandomSource::new(i, "darts")).unwrap();
        let setup = LowCommSetup::new(&p, &q, 0.05).unwrap();
        if tv_distance(setup.p_rounded(), setup.q_rounded()).unwrap() < 0.05 {
            continue;
        }
        checked += 1;
        let tally = simulate(&setup, 100_000, 40 + i, Execution::Parallel).unwrap();
        assert!(
            (tally.mean_dart_rounds() - 1.0).abs() <= 0.05,
            "{}",
            tally.mean_dart_rounds()
        );
    }
    assert!(checked > 0);
}

#[test]
fn bit_cost_formula() {
    let d = grid_denominator(64, 0.05 / 4.0).unwrap();
    assert_eq!(d, 5120);
    let slot = u64::from(ceil_log2(64) + ceil_log2(d + 1));
    let t = Transcript::new(
        vec![
            (
                Party::Alice,
                Message::Propose {
                    index: 5,
                    prob_numerator: 80,
                },
            ),
            (Party::Bob, Message::Approve),
        ],
        64,
        d,
    );
    assert_eq!(bit_cost(&t, 64, 0.05).unwrap(), 20);
    assert_eq!(slot + 1, 20);
    let incomplete = Transcript::new(
        vec![(
            Party::Alice,
            Message::Propose {
                index: 5,
                prob_numerator: 80,
            },
        )],
        64,
        d,
    );
    assert!(matches!(
        bit_cost(&incomplete, 64, 0.05),
        Err(CouplingError::IncompleteTranscript) | Err(CouplingError::ProtocolViolation(_))
    ));
}

/// Splits every item into two equal halves; TV is unchanged.
fn split(p: &DiscreteDistribution) -> DiscreteDistribution {
    let w: Vec<f64> = p.probs().iter().flat_map(|&x| [x / 2.0, x / 2.0]).collect();
    dist(&w)
}

#[test]
fn bits_grow_logarithmically() {
    let eps = 0.05;
    let (mut p, mut q) = random_pair(16, &SharedRandomSource::new(3, "scaling")).unwrap();
    let mut previous: Option<(f64, f64)> = None;
    for _ in 0..4 {
        let n = p.len();
        let setup = LowCommSetup::new(&p, &q, eps).unwrap();
        let tally = simulate(&setup, 50_000, 5, Execution::Parallel).unwrap();
        let d = setup.denominator();
        let cap = 3.0 * (ceil_log2(n as u64) + ceil_log2(d + 1) + 1) as f64 + 2.0;
        assert!(
            tally.mean_bits() <= cap,
            "n={n}: {} > {cap}",
            tally.mean_bits()
        );
        if let Some((bits, messages)) = previous {
            let slots = messages.max(tally.mean_messages());
            let growth = (tally.mean_bits() - bits) / slots;
            assert!(growth <= 2.5, "n={n}: {growth} bits per message slot");
        }
        previous = Some((tally.mean_bits(), tally.mean_messages()));
        p = split(&p);
        q = split(&q);
    }
}

#[test]
fn sessions_are_deterministic() {
    let (p, q) = random_pair(10, &SharedRandomSource::new(7, "det")).unwrap();
    for t in 0..200 {
        let src = session_source(77, t);
        assert_eq!(
            run_lowcomm(&p, &q, 0.2, &src).unwrap(),
            run_lowcomm(&p, &q, 0.2, &src).unwrap()
        );
    }
}

#[test]
fn mismatched_grids_are_rejected() {
    let p = discretize(&dist(&[0.5, 0.5]), 0.1).unwrap();
    let q = GridDistribution::new(vec![3, 7], 10).unwrap();
    let q2 = GridDistribution::new(vec![3, 7, 0], 10).unwrap();
    let src = SharedRandomSource::new(0, "x");
    assert!(matches!(
        run_protocol4(&p, &q, &src),
        Err(CouplingError::DenominatorMismatch { .. })
    ));
    assert!(matches!(
        run_protocol4(&p, &q2, &src),
        Err(CouplingError::DimensionMismatch { .. })
    ));
    assert!(LowCommSetup::new(&dist(&[1.0]), &dist(&[1.0]), 1.5).is_err());
}
