//! Separability of a security under a partition structure.
//!
//! A security is non-separable when some prior and value `v` make every
//! trader's conditional expectation equal `v` on the support while the
//! security differs from `v` somewhere on it; trading can then stall with
//! an uninformative price. The characterisation used here is the sign
//! condition: the security is separable iff for every `v` there are
//! per-cell weights λ with `(X(ω) − v)·Σ_i λ_i(Π_i(ω)) > 0` at every state
//! where `X(ω) ≠ v`. Both directions are decided by small dense linear
//! feasibility problems; the two searches are dual, so exactly one of them
//! succeeds for a given `v`.

pub mod simplex;

use crate::knowledge::{InfoStructure, StateId, TraderId};
use simplex::{Constraint, LpOutcome, Sense};

/// Values equal up to this tolerance are treated as "X(ω) = v".
const VALUE_TOL: f64 = 1e-9;

/// Per-cell weights witnessing separability at one value `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// `lambda[trader][cell_index]`, indexed like the structure's partitions.
    pub lambda: Vec<Vec<f64>>,
}

impl Certificate {
    /// Builds a certificate by assigning each cell a weight.
    pub fn from_fn(
        structure: &InfoStructure,
        mut weight: impl FnMut(TraderId, &crate::knowledge::StateSet) -> f64,
    ) -> Certificate {
        Certificate {
            lambda: structure
                .partitions()
                .iter()
                .enumerate()
                .map(|(i, p)| p.cells().iter().map(|c| weight(i, c)).collect())
                .collect(),
        }
    }

    fn sum_at(&self, structure: &InfoStructure, state: StateId) -> f64 {
        structure
            .partitions()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let cell_index = p
                    .cells()
                    .iter()
                    .position(|c| c.contains(state))
                    .expect("partition covers the state space");
                self.lambda[i][cell_index]
            })
            .sum()
    }
}

/// A prior and value at which no trade is informative.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub mu: Vec<f64>,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeparabilityVerdict {
    /// One certificate per candidate value.
    Separable(Vec<(f64, Certificate)>),
    NonSeparable(Witness),
}

impl SeparabilityVerdict {
    pub fn is_separable(&self) -> bool {
        matches!(self, SeparabilityVerdict::Separable(_))
    }
}

/// Checks the sign condition `(X(ω) − v)·Σ_i λ_i(Π_i(ω)) > 0` at every state
/// with `X(ω) ≠ v`.
pub fn certificate_holds(structure: &InfoStructure, cert: &Certificate, v: f64) -> bool {
    (0..structure.space.n_states()).all(|state| {
        let gap = structure.security.payoff(state) - v;
        if gap.abs() <= VALUE_TOL {
            return true;
        }
        gap * cert.sum_at(structure, state) > 0.0
    })
}

/// Searches for a certificate at `v` by linear feasibility. The strict
/// inequalities are normalised to `Σλ ≥ 1` where `X > v` and `Σλ ≤ -1`
/// where `X < v`; any feasible point of that relaxation is a certificate.
pub fn find_certificate(structure: &InfoStructure, v: f64) -> Option<Certificate> {
    // Free λ variables are split into nonnegative pairs u - w.
    let cell_counts: Vec<usize> = structure
        .partitions()
        .iter()
        .map(|p| p.cells().len())
        .collect();
    let n_cells: usize = cell_counts.iter().sum();
    let offsets: Vec<usize> = cell_counts
        .iter()
        .scan(0, |acc, &c| {
            let start = *acc;
            *acc += c;
            Some(start)
        })
        .collect();
    let n_vars = 2 * n_cells;

    let mut constraints = Vec::new();
    for state in 0..structure.space.n_states() {
        let gap = structure.security.payoff(state) - v;
        if gap.abs() <= VALUE_TOL {
            continue;
        }
        let mut coeffs = vec![0.0; n_vars];
        for (i, p) in structure.partitions().iter().enumerate() {
            let cell_index = p.cells().iter().position(|c| c.contains(state)).unwrap();
            let var = offsets[i] + cell_index;
            coeffs[var] += 1.0;
            coeffs[n_cells + var] -= 1.0;
        }
        constraints.push(Constraint {
            coeffs,
            sense: if gap > 0.0 { Sense::Ge } else { Sense::Le },
            rhs: if gap > 0.0 { 1.0 } else { -1.0 },
        });
    }
    if constraints.is_empty() {
        // X never differs from v: the condition is vacuous.
        return Some(Certificate::from_fn(structure, |_, _| 0.0));
    }

    // Minimising the total split mass keeps the weights small and bounded.
    let objective: Vec<f64> = vec![-1.0; n_vars];
    match simplex::solve(n_vars, &objective, &constraints) {
        LpOutcome::Optimal { x, .. } => {
            let lambda = cell_counts
                .iter()
                .enumerate()
                .map(|(i, &count)| {
                    (0..count)
                        .map(|c| x[offsets[i] + c] - x[n_cells + offsets[i] + c])
                        .collect()
                })
                .collect();
            let cert = Certificate { lambda };
            debug_assert!(certificate_holds(structure, &cert, v));
            Some(cert)
        }
        LpOutcome::Infeasible => None,
        LpOutcome::Unbounded => unreachable!("objective is bounded above by zero"),
    }
}

/// Searches for a non-separability witness at `v`: a prior µ with every
/// positive-mass cell's conditional expectation equal to `v` and positive
/// mass where the security differs from `v`. Cells with zero mass impose
/// nothing, so the per-cell balance is written as a plain equality and the
/// disagreement mass is maximised.
pub fn witness_search(structure: &InfoStructure, v: f64) -> Option<Witness> {
    let n = structure.space.n_states();
    let mut constraints = vec![Constraint {
        coeffs: vec![1.0; n],
        sense: Sense::Eq,
        rhs: 1.0,
    }];
    for p in structure.partitions() {
        for cell in p.cells() {
            let mut coeffs = vec![0.0; n];
            for state in cell.iter() {
                coeffs[state] = structure.security.payoff(state) - v;
            }
            constraints.push(Constraint {
                coeffs,
                sense: Sense::Eq,
                rhs: 0.0,
            });
        }
    }
    let objective: Vec<f64> = (0..n)
        .map(|s| {
            if (structure.security.payoff(s) - v).abs() > VALUE_TOL {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    match simplex::solve(n, &objective, &constraints) {
        LpOutcome::Optimal { x, value } if value > 1e-7 => {
            let total: f64 = x.iter().sum();
            let mu: Vec<f64> = x.iter().map(|m| (m / total).max(0.0)).collect();
            Some(Witness { mu, v })
        }
        _ => None,
    }
}

/// Candidate values for the sign condition: payoff values strictly inside
/// the payoff range plus midpoints of consecutive distinct values. Outside
/// the range the condition holds trivially, and a binary security needs only
/// the single interior midpoint because the sign pattern of `X − v` is
/// constant across the whole interval.
pub fn candidate_values(structure: &InfoStructure) -> Vec<f64> {
    let mut values: Vec<f64> = structure.security.payoffs().to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| (*a - *b).abs() <= VALUE_TOL);
    if values.len() < 2 {
        return Vec::new();
    }
    let (min, max) = (values[0], values[values.len() - 1]);
    let mut candidates = Vec::new();
    for pair in values.windows(2) {
        candidates.push((pair[0] + pair[1]) / 2.0);
    }
    for &v in &values {
        if v > min + VALUE_TOL && v < max - VALUE_TOL {
            candidates.push(v);
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates
}

/// Full classification: separable iff a certificate exists for every
/// candidate value, otherwise a verified witness at a failing value.
pub fn classify(structure: &InfoStructure) -> SeparabilityVerdict {
    let mut certificates = Vec::new();
    for v in candidate_values(structure) {
        match find_certificate(structure, v) {
            Some(cert) => certificates.push((v, cert)),
            None => {
                let witness = witness_search(structure, v)
                    .expect("certificate search and witness search are dual");
                return SeparabilityVerdict::NonSeparable(witness);
            }
        }
    }
    SeparabilityVerdict::Separable(certificates)
}

/// Checks a witness against the defining conditions at tolerance 1e-9.
pub fn witness_holds(structure: &InfoStructure, witness: &Witness) -> bool {
    let mu = &witness.mu;
    if mu.len() != structure.space.n_states() {
        return false;
    }
    if mu.iter().any(|&m| m < -VALUE_TOL) {
        return false;
    }
    if (mu.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return false;
    }
    let disagrees = (0..mu.len()).any(|s| {
        mu[s] > VALUE_TOL && (structure.security.payoff(s) - witness.v).abs() > VALUE_TOL
    });
    if !disagrees {
        return false;
    }
    structure.partitions().iter().all(|p| {
        p.cells().iter().all(|cell| {
            let mass: f64 = cell.iter().map(|s| mu[s]).sum();
            if mass <= VALUE_TOL {
                return true;
            }
            let expectation: f64 = cell
                .iter()
                .map(|s| mu[s] * structure.security.payoff(s))
                .sum::<f64>()
                / mass;
            (expectation - witness.v).abs() <= 1e-9
        })
    })
}

/// The classic two-signal XOR market: each trader knows one input bit, the
/// security pays on odd parity, and the uniform prior leaves every cell's
/// posterior at one half.
pub fn xor_structure() -> InfoStructure {
    use crate::knowledge::{Prior, Security, StateSpace};
    let space = StateSpace::new(vec!["d_a".into(), "d_b".into()]).unwrap();
    let n = space.n_states();
    let payoff: Vec<f64> = (0..n)
        .map(|s| {
            let bits = space.signals(s);
            f64::from(bits[0] != bits[1])
        })
        .collect();
    let partitions = vec![
        space.partition_from_signals(&[0]),
        space.partition_from_signals(&[1]),
    ];
    let true_state = space.state_from_signals(&[true, false]);
    InfoStructure::new(
        space.clone(),
        Prior::uniform(n),
        partitions,
        Security::new(payoff),
        true_state,
    )
    .unwrap()
}

/// Hand-constructed certificates for the two non-Arrow-Debreu benchmark
/// securities.
pub fn reference_certificate(preset: crate::knowledge::StructureId) -> Option<Certificate> {
    use crate::knowledge::{make_structure, StructureId};
    match preset {
        StructureId::Easy => {
            let s = make_structure(preset);
            let a = s.space.state_from_name("a").unwrap();
            Some(Certificate::from_fn(&s, |_, cell| {
                if cell.contains(a) {
                    1.0
                } else {
                    -1.0
                }
            }))
        }
        StructureId::VeryHard => {
            let s = make_structure(preset);
            let a = s.space.state_from_name("a").unwrap();
            let h = s.space.state_from_name("h").unwrap();
            Some(Certificate::from_fn(&s, |_, cell| {
                if cell.contains(a) {
                    -1.0
                } else if cell.contains(h) {
                    -10.0
                } else {
                    4.0
                }
            }))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{make_structure, StructureId};

    #[test]
    fn reference_certificates_pass() {
        for preset in [StructureId::Easy, StructureId::VeryHard] {
            let s = make_structure(preset);
            let cert = reference_certificate(preset).unwrap();
            assert!(certificate_holds(&s, &cert, 0.5), "{preset:?}");
            // any interior v works for a binary security
            assert!(certificate_holds(&s, &cert, 0.25));
            assert!(certificate_holds(&s, &cert, 0.75));
        }
    }

    #[test]
    fn zero_weights_fail_strictness() {
        let s = make_structure(StructureId::Easy);
        let zero = Certificate::from_fn(&s, |_, _| 0.0);
        assert!(!certificate_holds(&s, &zero, 0.5));
    }

    #[test]
    fn certificates_are_scale_invariant() {
        let s = make_structure(StructureId::VeryHard);
        let cert = reference_certificate(StructureId::VeryHard).unwrap();
        for scale in [0.1, 2.0, 1000.0] {
            let scaled = Certificate {
                lambda: cert
                    .lambda
                    .iter()
                    .map(|row| row.iter().map(|l| l * scale).collect())
                    .collect(),
            };
            assert!(certificate_holds(&s, &scaled, 0.5));
        }
    }

    #[test]
    fn presets_are_separable() {
        for preset in StructureId::ALL {
            let s = make_structure(preset);
            let cert = find_certificate(&s, 0.5);
            assert!(cert.is_some(), "{preset:?}");
            assert!(certificate_holds(&s, &cert.unwrap(), 0.5));
            assert!(witness_search(&s, 0.5).is_none(), "{preset:?}");
            assert!(classify(&s).is_separable(), "{preset:?}");
        }
    }

    #[test]
    fn candidate_values_for_binary_payoff() {
        let s = make_structure(StructureId::Easy);
        assert_eq!(candidate_values(&s), vec![0.5]);
    }

    #[test]
    fn xor_is_non_separable_with_uniform_witness() {
        let s = xor_structure();
        assert!(find_certificate(&s, 0.5).is_none());
        let witness = witness_search(&s, 0.5).expect("xor has a witness");
        assert!(witness_holds(&s, &witness));
        match classify(&s) {
            SeparabilityVerdict::NonSeparable(w) => {
                assert!(witness_holds(&s, &w));
                // the cell-balance equations pin every state to equal mass,
                // so the uniform prior is the unique witness here
                for m in &w.mu {
                    assert!((m - 0.25).abs() < 1e-9, "witness {:?}", w.mu);
                }
            }
            other => panic!("expected non-separable, got {other:?}"),
        }
    }

    #[test]
    fn single_fully_informed_trader_is_separable() {
        use crate::knowledge::{Partition, Prior, Security, StateSet, StateSpace};
        let space = StateSpace::new(vec!["d_a".into(), "d_b".into()]).unwrap();
        let n = space.n_states();
        let cells = (0..n).map(|s| StateSet::singleton(n, s)).collect();
        let s = InfoStructure::new(
            space,
            Prior::uniform(n),
            vec![Partition::new(cells).unwrap()],
            Security::new(vec![1.0, 0.0, 0.0, 0.0]),
            0,
        )
        .unwrap();
        assert!(classify(&s).is_separable());
        assert!(witness_search(&s, 0.5).is_none());
    }

    #[test]
    fn duality_on_presets_and_xor() {
        let mut structures: Vec<InfoStructure> =
            StructureId::ALL.iter().map(|&p| make_structure(p)).collect();
        structures.push(xor_structure());
        for s in &structures {
            for v in candidate_values(s) {
                let cert = find_certificate(s, v);
                let witness = witness_search(s, v);
                assert!(
                    cert.is_some() ^ witness.is_some(),
                    "exactly one side must succeed at v={v}"
                );
            }
        }
    }
}
