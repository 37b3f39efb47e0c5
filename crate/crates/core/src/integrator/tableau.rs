use super::{IResult, IntegratorError};

/// One Runge-Kutta tableau: stage matrix `a` (row-major, `s × s`), weights
/// `b` and abscissae `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tableau {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl Tableau {
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    fn row_sums(&self) -> Vec<f64> {
        self.a.iter().map(|r| r.iter().sum()).collect()
    }
}

/// Additive explicit/implicit pair sharing stage count and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherPair {
    pub name: String,
    pub explicit: Tableau,
    pub implicit: Tableau,
    /// Embedded weights used for error estimation, shared by both parts.
    pub b_hat: Option<Vec<f64>>,
    pub order: usize,
    pub embedded_order: usize,
}

const STRUCTURE_TOL: f64 = 1e-14;

impl ButcherPair {
    /// Kennedy and Carpenter's four-stage ARK3(2)4L[2]SA pair.
    pub fn ark324() -> Self {
        let g = 1767732205903.0 / 4055673282236.0;
        let c = vec![0.0, 1767732205903.0 / 2027836641118.0, 3.0 / 5.0, 1.0];
        let b = vec![
            1471266399579.0 / 7840856788654.0,
            -4482444167858.0 / 7529755066697.0,
            11266239266428.0 / 11593286722821.0,
            g,
        ];
        let b_hat = vec![
            2756255671327.0 / 12835298489170.0,
            -10771552573575.0 / 22201958757719.0,
            9247589265047.0 / 10645013368117.0,
            2193209047091.0 / 5459859503100.0,
        ];
        let ai = vec![
            vec![0.0, 0.0, 0.0, 0.0],
            vec![g, g, 0.0, 0.0],
            vec![
                2746238789719.0 / 10658868560708.0,
                -640167445237.0 / 6845629431997.0,
                g,
                0.0,
            ],
            b.clone(),
        ];
        let ae = vec![
            vec![0.0, 0.0, 0.0, 0.0],
            vec![1767732205903.0 / 2027836641118.0, 0.0, 0.0, 0.0],
            vec![
                5535828885825.0 / 10492691773637.0,
                788022342437.0 / 10882634858940.0,
                0.0,
                0.0,
            ],
            vec![
                6485989280629.0 / 16251701735622.0,
                -4246266847089.0 / 9704473918619.0,
                10755448449292.0 / 10357097424841.0,
                0.0,
            ],
        ];
        ButcherPair {
            name: "ARK3(2)4L[2]SA".into(),
            explicit: Tableau {
                a: ae,
                b: b.clone(),
                c: c.clone(),
            },
            implicit: Tableau { a: ai, b, c },
            b_hat: Some(b_hat),
            order: 3,
            embedded_order: 2,
        }
    }

    /// Forward Euler paired with backward Euler. No embedding.
    pub fn euler() -> Self {
        ButcherPair {
            name: "euler".into(),
            explicit: Tableau {
                a: vec![vec![0.0]],
                b: vec![1.0],
                c: vec![0.0],
            },
            implicit: Tableau {
                a: vec![vec![1.0]],
                b: vec![1.0],
                c: vec![1.0],
            },
            b_hat: None,
            order: 1,
            embedded_order: 0,
        }
    }

    pub fn stages(&self) -> usize {
        self.explicit.stages()
    }

    /// The nonzero diagonal entry shared by the implicit stages.
    pub fn implicit_diagonal(&self) -> f64 {
        (0..self.stages())
            .map(|i| self.implicit.a[i][i])
            .find(|&d| d != 0.0)
            .unwrap_or(0.0)
    }

    /// Checks shapes and structure: strictly lower explicit tableau, lower
    /// implicit tableau with one common nonzero diagonal value, shared weights
    /// summing to one, and row sums matching the abscissae.
    pub fn validate(&self) -> IResult<()> {
        let bad = |m: String| Err(IntegratorError::InvalidTableau(m));
        let s = self.stages();
        if s == 0 {
            return bad("no stages".into());
        }
        for (name, t) in [("explicit", &self.explicit), ("implicit", &self.implicit)] {
            if t.b.len() != s || t.c.len() != s || t.a.len() != s || t.a.iter().any(|r| r.len() != s) {
                return bad(format!("{name} tableau is not {s}-stage"));
            }
            for (i, (sum, c)) in t.row_sums().iter().zip(&t.c).enumerate() {
                if (sum - c).abs() > STRUCTURE_TOL {
                    return bad(format!("{name} row {i} sums to {sum}, abscissa is {c}"));
                }
            }
            if (t.b.iter().sum::<f64>() - 1.0).abs() > STRUCTURE_TOL {
                return bad(format!("{name} weights do not sum to one"));
            }
        }
        if let Some(bh) = &self.b_hat {
            if bh.len() != s {
                return bad("embedded weights have the wrong length".into());
            }
            if (bh.iter().sum::<f64>() - 1.0).abs() > STRUCTURE_TOL {
                return bad("embedded weights do not sum to one".into());
            }
        }
        if self
            .explicit
            .b
            .iter()
            .zip(&self.implicit.b)
            .any(|(x, y)| (x - y).abs() > STRUCTURE_TOL)
        {
            return bad("explicit and implicit weights differ".into());
        }
        for i in 0..s {
            for j in i..s {
                if self.explicit.a[i][j] != 0.0 {
                    return bad(format!("explicit tableau has entry ({i},{j}) on or above the diagonal"));
                }
                if j > i && self.implicit.a[i][j] != 0.0 {
                    return bad(format!("implicit tableau has entry ({i},{j}) above the diagonal"));
                }
            }
        }
        let diag = self.implicit_diagonal();
        if (0..s).any(|i| {
            let d = self.implicit.a[i][i];
            d != 0.0 && d != diag
        }) {
            return bad("implicit diagonal is not constant".into());
        }
        Ok(())
    }
}

/// Residual of one order condition.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderCondition {
    pub order: usize,
    pub label: String,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct OrderReport {
    pub conditions: Vec<OrderCondition>,
    /// Highest order whose conditions (and all lower ones) hold for the main
    /// weights, up to 3.
    pub confirmed_order: usize,
    /// Same for the embedded weights.
    pub confirmed_embedded_order: usize,
    pub tolerance: f64,
    /// Conditions at or below the claimed order(s) that fail.
    pub violations: Vec<OrderCondition>,
}

impl OrderReport {
    pub fn max_residual(&self, up_to_order: usize) -> f64 {
        self.conditions
            .iter()
            .filter(|c| c.order <= up_to_order && !c.label.starts_with("embedded"))
            .fold(0.0, |m, c| m.max(c.residual.abs()))
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| dot(r, x)).collect()
}

/// Additive order conditions through third order, including every coupling
/// between the explicit and implicit tableaus.
fn conditions(prefix: &str, weights: [&[f64]; 2], pair: &ButcherPair, out: &mut Vec<OrderCondition>) {
    let tabs = [("E", &pair.explicit), ("I", &pair.implicit)];
    let cs: Vec<Vec<f64>> = tabs.iter().map(|(_, t)| t.row_sums()).collect();
    for (bn, bw) in ["E", "I"].into_iter().zip(weights) {
        out.push(OrderCondition {
            order: 1,
            label: format!("{prefix}b{bn}·1"),
            residual: bw.iter().sum::<f64>() - 1.0,
        });
        for (mu, cm) in cs.iter().enumerate() {
            out.push(OrderCondition {
                order: 2,
                label: format!("{prefix}b{bn}·c{}", tabs[mu].0),
                residual: dot(bw, cm) - 0.5,
            });
        }
        for (mu, cm) in cs.iter().enumerate() {
            for (la, cl) in cs.iter().enumerate() {
                let cc: Vec<f64> = cm.iter().zip(cl).map(|(x, y)| x * y).collect();
                out.push(OrderCondition {
                    order: 3,
                    label: format!("{prefix}b{bn}·c{}c{}", tabs[mu].0, tabs[la].0),
                    residual: dot(bw, &cc) - 1.0 / 3.0,
                });
                let ac = matvec(&tabs[mu].1.a, cl);
                out.push(OrderCondition {
                    order: 3,
                    label: format!("{prefix}b{bn}·A{}c{}", tabs[mu].0, tabs[la].0),
                    residual: dot(bw, &ac) - 1.0 / 6.0,
                });
            }
        }
    }
}

fn confirmed(conds: &[OrderCondition], embedded: bool, tol: f64) -> usize {
    let mut order = 0;
    for k in 1..=3 {
        let ok = conds
            .iter()
            .filter(|c| c.order == k && c.label.starts_with("embedded") == embedded)
            .all(|c| c.residual.abs() <= tol);
        if !ok {
            break;
        }
        order = k;
    }
    order
}

/// Evaluates the additive order conditions of `pair` through third order.
pub fn verify_tableau_order(pair: &ButcherPair) -> OrderReport {
    let tol = 1e-12;
    let mut conds = Vec::new();
    conditions("", [&pair.explicit.b, &pair.implicit.b], pair, &mut conds);
    if let Some(bh) = &pair.b_hat {
        conditions("embedded ", [bh, bh], pair, &mut conds);
    }
    let violations = conds
        .iter()
        .filter(|c| {
            let claimed = if c.label.starts_with("embedded") {
                pair.embedded_order
            } else {
                pair.order
            };
            c.order <= claimed.min(3) && c.residual.abs() > tol
        })
        .cloned()
        .collect();
    OrderReport {
        confirmed_order: confirmed(&conds, false, tol),
        confirmed_embedded_order: confirmed(&conds, true, tol),
        conditions: conds,
        tolerance: tol,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_pair_is_valid_third_order() {
        let p = ButcherPair::ark324();
        p.validate().unwrap();
        let r = verify_tableau_order(&p);
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        assert_eq!(r.confirmed_order, 3);
        assert_eq!(r.confirmed_embedded_order, 2);
    }

    #[test]
    fn corrupted_weights_break_first_order() {
        let mut p = ButcherPair::ark324();
        p.explicit.b[0] += 1e-3;
        let r = verify_tableau_order(&p);
        assert!(r.violations.iter().any(|c| c.order == 1));
        assert_eq!(r.confirmed_order, 0);
    }

    #[test]
    fn euler_pair_is_first_order() {
        let p = ButcherPair::euler();
        p.validate().unwrap();
        let r = verify_tableau_order(&p);
        assert!(r.violations.is_empty());
        assert_eq!(r.confirmed_order, 1);
    }

    #[test]
    fn nonconstant_diagonal_rejected() {
        let mut p = ButcherPair::ark324();
        p.implicit.a[2][2] *= 1.5;
        p.implicit.c[2] = p.implicit.a[2].iter().sum();
        assert!(matches!(p.validate(), Err(IntegratorError::InvalidTableau(_))));
    }
}
