//! Small dense two-phase simplex for desk-scale feasibility problems.
//!
//! Solves `maximize c·x` subject to `A x {<=,=,>=} b`, `x >= 0`, on dense
//! tableaus of a few dozen variables. Bland's rule keeps pivoting finite.

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

pub fn solve(n_vars: usize, objective: &[f64], constraints: &[Constraint]) -> LpOutcome {
    assert_eq!(objective.len(), n_vars);
    let m = constraints.len();

    // Normalise to nonnegative right-hand sides.
    let mut rows: Vec<Constraint> = constraints.to_vec();
    for row in &mut rows {
        assert_eq!(row.coeffs.len(), n_vars);
        if row.rhs < 0.0 {
            for c in &mut row.coeffs {
                *c = -*c;
            }
            row.rhs = -row.rhs;
            row.sense = match row.sense {
                Sense::Le => Sense::Ge,
                Sense::Eq => Sense::Eq,
                Sense::Ge => Sense::Le,
            };
        }
    }

    // Column layout: structural | slack/surplus | artificial | rhs.
    let n_slack = rows
        .iter()
        .filter(|r| matches!(r.sense, Sense::Le | Sense::Ge))
        .count();
    let n_art = rows
        .iter()
        .filter(|r| matches!(r.sense, Sense::Eq | Sense::Ge))
        .count();
    let total = n_vars + n_slack + n_art;
    let rhs_col = total;

    let mut tableau = vec![vec![0.0f64; total + 1]; m];
    let mut basis = vec![usize::MAX; m];
    let mut slack_idx = n_vars;
    let mut art_idx = n_vars + n_slack;
    let mut artificial_cols = Vec::new();

    for (i, row) in rows.iter().enumerate() {
        tableau[i][..n_vars].copy_from_slice(&row.coeffs);
        tableau[i][rhs_col] = row.rhs;
        match row.sense {
            Sense::Le => {
                tableau[i][slack_idx] = 1.0;
                basis[i] = slack_idx;
                slack_idx += 1;
            }
            Sense::Ge => {
                tableau[i][slack_idx] = -1.0;
                slack_idx += 1;
                tableau[i][art_idx] = 1.0;
                basis[i] = art_idx;
                artificial_cols.push(art_idx);
                art_idx += 1;
            }
            Sense::Eq => {
                tableau[i][art_idx] = 1.0;
                basis[i] = art_idx;
                artificial_cols.push(art_idx);
                art_idx += 1;
            }
        }
    }

    // The objective row keeps reduced costs for maximisation: entry j starts
    // at -c_j, basic entries are eliminated to zero, and the rhs cell holds
    // the current objective value.
    let is_artificial = |c: usize| c >= n_vars + n_slack;

    // Phase 1: maximise the negated artificial mass.
    if !artificial_cols.is_empty() {
        let mut obj = vec![0.0f64; total + 1];
        for &c in &artificial_cols {
            obj[c] = 1.0;
        }
        for (i, &b) in basis.iter().enumerate() {
            if is_artificial(b) {
                for j in 0..=total {
                    obj[j] -= tableau[i][j];
                }
            }
        }
        if !run_simplex(&mut tableau, &mut obj, &mut basis, total) {
            // Phase 1 is bounded above by zero; treat an anomaly as infeasible.
            return LpOutcome::Infeasible;
        }
        if obj[rhs_col] < -1e-7 {
            return LpOutcome::Infeasible;
        }
        // Pivot leftover degenerate artificials out of the basis.
        for i in 0..m {
            if is_artificial(basis[i]) {
                if let Some(j) = (0..n_vars + n_slack).find(|&j| tableau[i][j].abs() > EPS) {
                    pivot(&mut tableau, &mut obj, &mut basis, i, j, total);
                }
            }
        }
    }

    // Phase 2: forbid artificials and optimise the real objective.
    for &c in &artificial_cols {
        for row in tableau.iter_mut() {
            row[c] = 0.0;
        }
    }
    let mut obj = vec![0.0f64; total + 1];
    for (j, &c) in objective.iter().enumerate() {
        obj[j] = -c;
    }
    for (i, &b) in basis.iter().enumerate() {
        if b < total && obj[b].abs() > 1e-12 {
            let factor = obj[b];
            for j in 0..=total {
                obj[j] -= factor * tableau[i][j];
            }
        }
    }
    if !run_simplex(&mut tableau, &mut obj, &mut basis, total) {
        return LpOutcome::Unbounded;
    }

    let mut x = vec![0.0f64; n_vars];
    for (i, &b) in basis.iter().enumerate() {
        if b < n_vars {
            x[b] = tableau[i][rhs_col];
        }
    }
    let value: f64 = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    LpOutcome::Optimal { x, value }
}

/// Simplex loop on a tableau whose objective row holds reduced costs to be
/// driven nonnegative. Returns false when the problem is unbounded.
fn run_simplex(
    tableau: &mut [Vec<f64>],
    obj: &mut [f64],
    basis: &mut [usize],
    total: usize,
) -> bool {
    let rhs_col = total;
    loop {
        // Bland's rule: smallest-index column with negative reduced cost.
        let Some(col) = (0..total).find(|&j| obj[j] < -EPS) else {
            return true;
        };
        let mut pivot_row = None;
        let mut best = f64::INFINITY;
        for (i, row) in tableau.iter().enumerate() {
            if row[col] > EPS {
                let ratio = row[rhs_col] / row[col];
                if ratio < best - EPS || (ratio < best + EPS && pivot_row.is_none()) {
                    best = ratio;
                    pivot_row = Some(i);
                }
            }
        }
        let Some(row) = pivot_row else {
            return false;
        };
        pivot(tableau, obj, basis, row, col, total);
    }
}

fn pivot(
    tableau: &mut [Vec<f64>],
    obj: &mut [f64],
    basis: &mut [usize],
    row: usize,
    col: usize,
    total: usize,
) {
    let factor = tableau[row][col];
    for v in tableau[row].iter_mut() {
        *v /= factor;
    }
    let pivot_row_values = tableau[row].clone();
    for (i, current) in tableau.iter_mut().enumerate() {
        if i != row && current[col].abs() > 1e-12 {
            let f = current[col];
            for (c, &p) in current.iter_mut().zip(&pivot_row_values) {
                *c -= f * p;
            }
        }
    }
    if obj[col].abs() > 1e-12 {
        let f = obj[col];
        for j in 0..=total {
            obj[j] -= f * tableau[row][j];
        }
    }
    basis[row] = col;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn le(coeffs: Vec<f64>, rhs: f64) -> Constraint {
        Constraint {
            coeffs,
            sense: Sense::Le,
            rhs,
        }
    }

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18
        let out = solve(
            2,
            &[3.0, 5.0],
            &[
                le(vec![1.0, 0.0], 4.0),
                le(vec![0.0, 2.0], 12.0),
                le(vec![3.0, 2.0], 18.0),
            ],
        );
        match out {
            LpOutcome::Optimal { x, value } => {
                assert_abs_diff_eq!(value, 36.0, epsilon = 1e-8);
                assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-8);
                assert_abs_diff_eq!(x[1], 6.0, epsilon = 1e-8);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn equality_and_ge_constraints() {
        // max x + y st x + y = 1, x >= 0.25
        let out = solve(
            2,
            &[1.0, 1.0],
            &[
                Constraint {
                    coeffs: vec![1.0, 1.0],
                    sense: Sense::Eq,
                    rhs: 1.0,
                },
                Constraint {
                    coeffs: vec![1.0, 0.0],
                    sense: Sense::Ge,
                    rhs: 0.25,
                },
            ],
        );
        match out {
            LpOutcome::Optimal { value, .. } => assert_abs_diff_eq!(value, 1.0, epsilon = 1e-8),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn detects_infeasibility() {
        // x >= 2 and x <= 1
        let out = solve(
            1,
            &[0.0],
            &[
                Constraint {
                    coeffs: vec![1.0],
                    sense: Sense::Ge,
                    rhs: 2.0,
                },
                le(vec![1.0], 1.0),
            ],
        );
        assert_eq!(out, LpOutcome::Infeasible);
    }

    #[test]
    fn detects_unboundedness() {
        let out = solve(
            1,
            &[1.0],
            &[Constraint {
                coeffs: vec![1.0],
                sense: Sense::Ge,
                rhs: 1.0,
            }],
        );
        assert_eq!(out, LpOutcome::Unbounded);
    }

    #[test]
    fn negative_rhs_is_normalised() {
        // -x <= -3  <=>  x >= 3; minimise x (max -x) -> 3
        let out = solve(1, &[-1.0], &[le(vec![-1.0], -3.0)]);
        match out {
            LpOutcome::Optimal { x, value } => {
                assert_abs_diff_eq!(x[0], 3.0, epsilon = 1e-8);
                assert_abs_diff_eq!(value, -3.0, epsilon = 1e-8);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }
}
