use crate::error::FieldError;
use crate::field::{MatrixField, ScalarField, VectorField};
use crate::multiindex::{enumerate_partitions, MultiIndex};
use crate::scalar::Scalar;

/// Which part of the order-`k` term a partition contributes to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TermClass {
    /// `Σ_i ∂_i f_0(u_0) u_{k,i}`.
    LinearTop,
    /// `f_k(u_0)`, the ε-family member of order `k` (and `f_0(u_0)` for `k = 0`).
    FamilyTop,
    /// Monomials in `u_1` only, no ε-family shift.
    PureFirst,
    /// Everything else.
    Rest,
}

#[derive(Clone, Debug)]
struct PlanTerm<T> {
    weight: T,
    factors: Vec<(usize, usize, u32)>,
    class: TermClass,
}

#[derive(Clone, Debug)]
struct PlanGroup<T> {
    j_offset: usize,
    alpha: MultiIndex,
    terms: Vec<PlanTerm<T>>,
}

/// Precomputed partition sum for one order `k`, reusable across evaluation
/// points. Partitions sharing `(jOffset, α)` share one derivative evaluation.
#[derive(Clone, Debug)]
pub struct OrderTermPlan<T: Scalar = f64> {
    k: usize,
    dim: usize,
    groups: Vec<PlanGroup<T>>,
}

/// Decomposition of an order-`k` term into the pieces written out explicitly
/// for the coefficient equations; `rest` is the implicit remainder
/// (`B_k^f` for the drift, `A_k^σ` for the diffusion).
#[derive(Clone, Debug, PartialEq)]
pub struct OrderTermSplit<T> {
    pub linear_top: T,
    pub pure_first: T,
    pub family_top: T,
    pub rest: T,
}

impl<T: Scalar> OrderTermSplit<T> {
    pub fn total(&self) -> T {
        self.linear_top.clone() + self.pure_first.clone() + self.family_top.clone() + self.rest.clone()
    }
}

impl<T: Scalar> OrderTermPlan<T> {
    /// Plan for `[f_ε(u(ε))]_k` with `family_len` ε-family members
    /// (`1` for an ε-independent field) and coefficients `u_0..u_depth`.
    pub fn new(k: usize, depth: usize, dim: usize, family_len: usize) -> Self {
        let depth = depth.min(k);
        let max_j_offset = family_len.saturating_sub(1);
        let mut groups: Vec<PlanGroup<T>> = Vec::new();
        for part in enumerate_partitions(k, depth, dim, max_j_offset) {
            let alpha = part.outer_index();
            let (num, den) = part.weight();
            let factors: Vec<_> = part.factors().collect();
            let class = if part.j_offset == k {
                TermClass::FamilyTop
            } else if part.j_offset == 0 && factors.len() == 1 && factors[0].0 == k && factors[0].2 == 1 {
                TermClass::LinearTop
            } else if part.j_offset == 0 && factors.iter().all(|&(j, _, _)| j == 1) {
                TermClass::PureFirst
            } else {
                TermClass::Rest
            };
            let term = PlanTerm {
                weight: T::from_ratio(num, den),
                factors,
                class,
            };
            match groups
                .iter_mut()
                .find(|g| g.j_offset == part.j_offset && g.alpha == alpha)
            {
                Some(g) => g.terms.push(term),
                None => groups.push(PlanGroup {
                    j_offset: part.j_offset,
                    alpha,
                    terms: vec![term],
                }),
            }
        }
        OrderTermPlan { k, dim, groups }
    }

    pub fn order(&self) -> usize {
        self.k
    }

    /// Highest derivative order any partition needs from family member `j`.
    pub fn required_order(&self, j: usize) -> Option<usize> {
        self.groups
            .iter()
            .filter(|g| g.j_offset == j)
            .map(|g| g.alpha.length())
            .max()
    }

    fn accumulate<F>(
        &self,
        family: &[&dyn ScalarField<T>],
        u: &[&[T]],
        mut keep: F,
    ) -> Result<OrderTermSplit<T>, FieldError>
    where
        F: FnMut(TermClass) -> bool,
    {
        let mut split = OrderTermSplit {
            linear_top: T::zero(),
            pure_first: T::zero(),
            family_top: T::zero(),
            rest: T::zero(),
        };
        let u0 = u[0];
        if u0.len() != self.dim {
            return Err(FieldError::DimensionMismatch {
                expected: self.dim,
                got: u0.len(),
            });
        }
        for group in &self.groups {
            let Some(field) = family.get(group.j_offset) else {
                continue;
            };
            if field.is_zero() || field.degree().is_some_and(|deg| deg < group.alpha.length()) {
                continue;
            }
            if !group.terms.iter().any(|t| keep(t.class)) {
                continue;
            }
            let deriv = field.derivative(&group.alpha, u0)?;
            if deriv.is_zero() {
                continue;
            }
            for term in group.terms.iter().filter(|t| keep(t.class)) {
                let mut mono = term.weight.clone();
                for &(j, i, g) in &term.factors {
                    let v = match u.get(j) {
                        Some(uj) => &uj[i],
                        None => {
                            mono = T::zero();
                            break;
                        }
                    };
                    for _ in 0..g {
                        mono = mono * v.clone();
                    }
                }
                let contribution = deriv.clone() * mono;
                let slot = match term.class {
                    TermClass::LinearTop => &mut split.linear_top,
                    TermClass::FamilyTop => &mut split.family_top,
                    TermClass::PureFirst => &mut split.pure_first,
                    TermClass::Rest => &mut split.rest,
                };
                *slot = slot.clone() + contribution;
            }
        }
        Ok(split)
    }

    /// Full order-`k` coefficient of one scalar component.
    pub fn evaluate(&self, family: &[&dyn ScalarField<T>], u: &[&[T]]) -> Result<T, FieldError> {
        Ok(self.accumulate(family, u, |_| true)?.total())
    }

    /// Order-`k` coefficient with the term linear in `u_k` left out, i.e. the
    /// inhomogeneity of the `k`-th coefficient equation.
    pub fn evaluate_without_top(&self, family: &[&dyn ScalarField<T>], u: &[&[T]]) -> Result<T, FieldError> {
        Ok(self.accumulate(family, u, |c| c != TermClass::LinearTop)?.total())
    }

    pub fn split(&self, family: &[&dyn ScalarField<T>], u: &[&[T]]) -> Result<OrderTermSplit<T>, FieldError> {
        self.accumulate(family, u, |_| true)
    }
}

/// `[f_ε(u(ε))]_k` for a scalar ε-family `f_ε = Σ_j ε^j f_j`; a single-member
/// family is the ε-independent case.
pub fn family_order_term<T: Scalar>(k: usize, family: &[&dyn ScalarField<T>], u: &[&[T]]) -> Result<T, FieldError> {
    let dim = u[0].len();
    OrderTermPlan::new(k, u.len() - 1, dim, family.len()).evaluate(family, u)
}

/// Explicit-term decomposition of [`family_order_term`].
pub fn split_family_order_term<T: Scalar>(
    k: usize,
    family: &[&dyn ScalarField<T>],
    u: &[&[T]],
) -> Result<OrderTermSplit<T>, FieldError> {
    let dim = u[0].len();
    OrderTermPlan::new(k, u.len() - 1, dim, family.len()).split(family, u)
}

/// `[β_ε(u(ε))]_k`, componentwise. Pass a single field for an ε-independent
/// drift, or `β_0, β_1, …` when the drift depends on ε.
pub fn drift_order_term<T: Scalar>(k: usize, family: &[VectorField<T>], u: &[&[T]]) -> Result<Vec<T>, FieldError> {
    let dim = u[0].len();
    let plan = OrderTermPlan::new(k, u.len() - 1, dim, family.len());
    (0..dim)
        .map(|l| {
            let comps: Vec<&dyn ScalarField<T>> = family.iter().map(|f| f.components()[l].as_ref()).collect();
            plan.evaluate(&comps, u)
        })
        .collect()
}

/// `[σ_ε(u(ε))]_k` as a row-major `d×d` matrix, for `σ_ε = Σ_j ε^j σ_j`.
pub fn diffusion_order_term<T: Scalar>(k: usize, family: &[MatrixField<T>], u: &[&[T]]) -> Result<Vec<T>, FieldError> {
    let dim = u[0].len();
    let plan = OrderTermPlan::new(k, u.len() - 1, dim, family.len());
    (0..dim * dim)
        .map(|idx| {
            let entries: Vec<&dyn ScalarField<T>> = family.iter().map(|s| s.entries()[idx].as_ref()).collect();
            plan.evaluate(&entries, u)
        })
        .collect()
}
