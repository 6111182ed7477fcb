//! Spectrum-based fault localization: coverage matrix construction, Ochiai
//! scoring, ranking, and candidate selection.
//!
//! The Ochiai coefficient of a statement is
//! `e_f / sqrt((e_f + n_f) * (e_f + e_p))`, over the counts of failing tests
//! executing it (`e_f`), failing tests not executing it (`n_f`), and passing
//! tests executing it (`e_p`); a statement never covered by a failing test
//! scores 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subject::{CoverageRecord, StatementLocation};

#[derive(Debug, Error)]
pub enum SbflError {
    #[error("coverage record for test {0} appears more than once")]
    DuplicateTest(String),
    #[error("fault localization needs at least one failing test")]
    NoFailingTest,
    #[error("matrix dimensions are inconsistent: {0}")]
    Shape(String),
}

/// Per-test coverage over a fixed statement list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    /// (test id, passed) in record order.
    pub tests: Vec<(String, bool)>,
    /// Canonically ordered statement list (file path, then index).
    pub statements: Vec<StatementLocation>,
    /// `hits[i][j]`: test `i` covered statement `j`.
    pub hits: Vec<Vec<bool>>,
}

impl CoverageMatrix {
    pub fn failing_count(&self) -> usize {
        self.tests.iter().filter(|(_, passed)| !passed).count()
    }

    pub fn passing_count(&self) -> usize {
        self.tests.len() - self.failing_count()
    }

    pub fn validate(&self) -> Result<(), SbflError> {
        if self.hits.len() != self.tests.len() {
            return Err(SbflError::Shape(format!(
                "{} hit rows for {} tests",
                self.hits.len(),
                self.tests.len()
            )));
        }
        for (i, row) in self.hits.iter().enumerate() {
            if row.len() != self.statements.len() {
                return Err(SbflError::Shape(format!(
                    "row {i} has {} columns for {} statements",
                    row.len(),
                    self.statements.len()
                )));
            }
        }
        Ok(())
    }
}

/// Builds the coverage matrix from per-test records. The statement list is
/// the union of all covered sets plus all program statements, canonically
/// ordered; tests keep record order.
pub fn build_matrix(
    records: &[CoverageRecord],
    program_statements: &[StatementLocation],
) -> Result<CoverageMatrix, SbflError> {
    let mut seen = std::collections::BTreeSet::new();
    for r in records {
        if !seen.insert(&r.test_id) {
            return Err(SbflError::DuplicateTest(r.test_id.clone()));
        }
    }

    let mut statements: std::collections::BTreeSet<StatementLocation> =
        program_statements.iter().cloned().collect();
    for r in records {
        statements.extend(r.covered.iter().cloned());
    }
    let statements: Vec<StatementLocation> = statements.into_iter().collect();

    let tests: Vec<(String, bool)> = records
        .iter()
        .map(|r| (r.test_id.clone(), r.outcome.passed()))
        .collect();
    let hits: Vec<Vec<bool>> = records
        .iter()
        .map(|r| statements.iter().map(|s| r.covered.contains(s)).collect())
        .collect();

    Ok(CoverageMatrix {
        tests,
        statements,
        hits,
    })
}

/// The Ochiai coefficient. Defined as 0 when no failing test covers the
/// statement (including the 0/0 case).
pub fn ochiai(e_f: usize, n_f: usize, e_p: usize) -> f64 {
    if e_f == 0 {
        return 0.0;
    }
    let denom = ((e_f + n_f) as f64 * (e_f + e_p) as f64).sqrt();
    e_f as f64 / denom
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspiciousnessScore {
    pub loc: StatementLocation,
    pub e_f: usize,
    pub e_p: usize,
    pub n_f: usize,
    pub n_p: usize,
    pub score: f64,
}

/// Scores every statement of the matrix and ranks descending by score, ties
/// broken by canonical statement order (file path, then statement index).
pub fn rank(matrix: &CoverageMatrix) -> Result<Vec<SuspiciousnessScore>, SbflError> {
    matrix.validate()?;
    let total_failing = matrix.failing_count();
    let total_passing = matrix.passing_count();
    if total_failing == 0 {
        return Err(SbflError::NoFailingTest);
    }

    let mut scores: Vec<SuspiciousnessScore> = matrix
        .statements
        .iter()
        .enumerate()
        .map(|(j, loc)| {
            let mut e_f = 0;
            let mut e_p = 0;
            for (i, (_, passed)) in matrix.tests.iter().enumerate() {
                if matrix.hits[i][j] {
                    if *passed {
                        e_p += 1;
                    } else {
                        e_f += 1;
                    }
                }
            }
            SuspiciousnessScore {
                loc: loc.clone(),
                e_f,
                e_p,
                n_f: total_failing - e_f,
                n_p: total_passing - e_p,
                score: ochiai(e_f, total_failing - e_f, e_p),
            }
        })
        .collect();

    scores.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.loc.cmp(&b.loc))
    });
    Ok(scores)
}

pub const DEFAULT_THRESHOLD: f64 = 0.01;
pub const DEFAULT_CAP: usize = 300;

/// Keeps the statements scoring at least `threshold`, truncated to the first
/// `cap` entries, preserving rank order.
pub fn select_candidates(
    ranked: &[SuspiciousnessScore],
    threshold: f64,
    cap: usize,
) -> Vec<StatementLocation> {
    ranked
        .iter()
        .filter(|s| s.score >= threshold)
        .take(cap)
        .map(|s| s.loc.clone())
        .collect()
}

/// Serializes a matrix as a stable JSON document for offline analysis.
pub fn export_matrix(matrix: &CoverageMatrix) -> String {
    serde_json::to_string_pretty(matrix).expect("matrix serializes")
}

pub fn import_matrix(text: &str) -> Result<CoverageMatrix, SbflError> {
    let matrix: CoverageMatrix =
        serde_json::from_str(text).map_err(|e| SbflError::Shape(e.to_string()))?;
    matrix.validate()?;
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subject::{TestOutcome, TestStatus};
    use std::collections::BTreeSet;

    fn loc(file: &str, i: u32) -> StatementLocation {
        StatementLocation::new(file, i)
    }

    fn record(test_id: &str, passed: bool, covered: &[StatementLocation]) -> CoverageRecord {
        let outcome = if passed {
            TestOutcome::pass(test_id, 0)
        } else {
            TestOutcome::not_passing(test_id, TestStatus::Fail, "boom", 0)
        };
        CoverageRecord {
            test_id: test_id.into(),
            covered: covered.iter().cloned().collect(),
            outcome,
        }
    }

    #[test]
    fn ochiai_examples() {
        assert_eq!(ochiai(2, 0, 0), 1.0);
        assert_eq!(ochiai(0, 3, 5), 0.0);
        assert_eq!(ochiai(1, 1, 1), 0.5); // 1 / sqrt(2 * 2)
    }

    #[test]
    fn ochiai_zero_cases() {
        assert_eq!(ochiai(0, 0, 0), 0.0);
        assert_eq!(ochiai(0, 1, 0), 0.0);
    }

    #[test]
    fn build_matrix_includes_uncovered_program_statements() {
        let s = [loc("src/a.mini", 1), loc("src/a.mini", 2), loc("src/a.mini", 3)];
        let records = [
            record("T::f", false, &[s[0].clone(), s[1].clone()]),
            record("T::p", true, &[s[0].clone()]),
        ];
        let matrix = build_matrix(&records, &s).unwrap();
        assert_eq!(matrix.statements.len(), 3);
        assert_eq!(matrix.tests.len(), 2);
        // statement 3 is never covered
        let j = matrix.statements.iter().position(|x| x == &s[2]).unwrap();
        assert!(matrix.hits.iter().all(|row| !row[j]));
    }

    #[test]
    fn duplicate_records_are_rejected() {
        let s = [loc("src/a.mini", 1)];
        let records = [record("T::f", false, &s), record("T::f", true, &s)];
        assert!(matches!(
            build_matrix(&records, &s),
            Err(SbflError::DuplicateTest(_))
        ));
    }

    #[test]
    fn rank_requires_a_failing_test() {
        let s = [loc("src/a.mini", 1)];
        let records = [record("T::p", true, &s)];
        let matrix = build_matrix(&records, &s).unwrap();
        assert!(matches!(rank(&matrix), Err(SbflError::NoFailingTest)));
    }

    #[test]
    fn rank_orders_descending_with_canonical_tiebreak() {
        let s = [
            loc("src/a.mini", 1),
            loc("src/a.mini", 2),
            loc("src/b.mini", 1),
        ];
        // failing covers all three (tie), passing covers only a.mini:1
        let records = [
            record("T::f", false, &s),
            record("T::p", true, &[s[0].clone()]),
        ];
        let matrix = build_matrix(&records, &s).unwrap();
        let ranked = rank(&matrix).unwrap();
        // a.mini:2 and b.mini:1 share the top score; file order breaks the tie
        assert_eq!(ranked[0].loc, s[1]);
        assert_eq!(ranked[1].loc, s[2]);
        assert_eq!(ranked[2].loc, s[0]);
        assert!(ranked[0].score >= ranked[1].score && ranked[1].score > ranked[2].score);
    }

    #[test]
    fn select_caps_at_300_in_tiebreak_order() {
        let ranked: Vec<SuspiciousnessScore> = (1..=301)
            .map(|i| SuspiciousnessScore {
                loc: loc("src/big.mini", i),
                e_f: 1,
                e_p: 1,
                n_f: 1,
                n_p: 1,
                score: 0.5,
            })
            .collect();
        let selected = select_candidates(&ranked, DEFAULT_THRESHOLD, DEFAULT_CAP);
        assert_eq!(selected.len(), 300);
        assert_eq!(selected[0], loc("src/big.mini", 1));
        assert_eq!(selected[299], loc("src/big.mini", 300));
    }

    #[test]
    fn select_respects_threshold_boundary() {
        let mk = |i, score| SuspiciousnessScore {
            loc: loc("src/a.mini", i),
            e_f: 1,
            e_p: 0,
            n_f: 0,
            n_p: 0,
            score,
        };
        let ranked = vec![mk(1, 0.5), mk(2, 0.01), mk(3, 0.0099)];
        let selected = select_candidates(&ranked, DEFAULT_THRESHOLD, DEFAULT_CAP);
        assert_eq!(selected.len(), 2);
    }

    #[test]
    fn select_empty_ranking_is_empty() {
        assert!(select_candidates(&[], DEFAULT_THRESHOLD, DEFAULT_CAP).is_empty());
    }

    #[test]
    fn matrix_round_trips_through_export() {
        let s = [loc("src/a.mini", 1), loc("src/a.mini", 2)];
        let records = [
            record("T::f", false, &s),
            record("T::p", true, &[s[1].clone()]),
        ];
        let matrix = build_matrix(&records, &s).unwrap();
        let back = import_matrix(&export_matrix(&matrix)).unwrap();
        assert_eq!(matrix, back);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        /// Independent brute-force recomputation straight from the hit
        /// vectors, kept deliberately separate from `rank`'s counting path.
        pub(crate) fn brute_force_scores(matrix: &CoverageMatrix) -> Vec<(StatementLocation, f64)> {
            matrix
                .statements
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let covering: Vec<usize> = (0..matrix.tests.len())
                        .filter(|&i| matrix.hits[i][j])
                        .collect();
                    let e_f = covering
                        .iter()
                        .filter(|&&i| !matrix.tests[i].1)
                        .count() as f64;
                    let e_p = covering.len() as f64 - e_f;
                    let total_f = matrix
                        .tests
                        .iter()
                        .filter(|(_, passed)| !passed)
                        .count() as f64;
                    let score = if e_f == 0.0 {
                        0.0
                    } else {
                        e_f / (total_f * (e_f + e_p)).sqrt()
                    };
                    (s.clone(), score)
                })
                .collect()
        }

        pub(crate) fn arb_matrix() -> impl Strategy<Value = CoverageMatrix> {
            (1usize..=6, 1usize..=10)
                .prop_flat_map(|(tests, statements)| {
                    (
                        prop::collection::vec(
                            prop::collection::vec(any::<bool>(), statements),
                            tests,
                        ),
                        prop::collection::vec(any::<bool>(), tests),
                    )
                })
                .prop_filter_map("need a failing test", |(hits, passes)| {
                    if passes.iter().all(|p| *p) {
                        return None;
                    }
                    let statements: Vec<StatementLocation> = (1..=hits[0].len())
                        .map(|i| StatementLocation::new("src/gen.mini", i as u32))
                        .collect();
                    let tests: Vec<(String, bool)> = passes
                        .iter()
                        .enumerate()
                        .map(|(i, p)| (format!("G::t{i}"), *p))
                        .collect();
                    Some(CoverageMatrix {
                        tests,
                        statements,
                        hits,
                    })
                })
        }

        proptest! {
            #[test]
            fn scores_match_brute_force_exactly(matrix in arb_matrix()) {
                let ranked = rank(&matrix).unwrap();
                let brute: std::collections::BTreeMap<_, _> =
                    brute_force_scores(&matrix).into_iter().collect();
                for s in &ranked {
                    prop_assert_eq!(s.score, brute[&s.loc], "score mismatch at {}", &s.loc);
                }
            }

            #[test]
            fn scores_stay_in_unit_interval(matrix in arb_matrix()) {
                for s in rank(&matrix).unwrap() {
                    prop_assert!((0.0..=1.0).contains(&s.score));
                    let perfect = s.n_f == 0 && s.e_p == 0 && s.e_f > 0;
                    prop_assert_eq!(s.score == 1.0, perfect);
                }
            }

            #[test]
            fn permuting_tests_changes_nothing(matrix in arb_matrix(), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut order: Vec<usize> = (0..matrix.tests.len()).collect();
                order.shuffle(&mut rng);
                let permuted = CoverageMatrix {
                    tests: order.iter().map(|&i| matrix.tests[i].clone()).collect(),
                    statements: matrix.statements.clone(),
                    hits: order.iter().map(|&i| matrix.hits[i].clone()).collect(),
                };
                let a = rank(&matrix).unwrap();
                let b = rank(&permuted).unwrap();
                prop_assert_eq!(a.len(), b.len());
                for (x, y) in a.iter().zip(b.iter()) {
                    prop_assert_eq!(&x.loc, &y.loc);
                    prop_assert_eq!(x.score, y.score);
                }
            }

            #[test]
            fn selection_respects_threshold_and_cap(
                matrix in arb_matrix(),
                threshold in 0.0f64..=1.0,
                cap in 0usize..=12,
            ) {
                let ranked = rank(&matrix).unwrap();
                let selected = select_candidates(&ranked, threshold, cap);
                prop_assert!(selected.len() <= cap);
                let by_loc: std::collections::BTreeMap<_, _> =
                    ranked.iter().map(|s| (s.loc.clone(), s.score)).collect();
                for loc in &selected {
                    prop_assert!(by_loc[loc] >= threshold);
                }
            }
        }
    }
}
