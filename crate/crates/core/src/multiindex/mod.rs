//! Multi-index combinatorics and the order-`k` extraction of Taylor
//! composition coefficients.
//!
//! For `u(ε) = u_0 + ε u_1 + … + ε^N u_N` and a smooth `f`, the coefficient of
//! `ε^k` in `f(u(ε))` is a sum over [`OrderPartition`]s: tables `γ_{j,i}` with
//! `Σ_{i,j} j·γ_{j,i} = k` whose column sums form the outer multi-index `α`.
//! Each contributes `D^α f(u_0)/α! · Π_i (α_i!/Π_j γ_{j,i}!) · Π u_{j,i}^{γ_{j,i}}`.
//! For ε-dependent families `σ_ε = Σ_j ε^j σ_j` the same sum runs with an extra
//! `jOffset = j` shift.

mod order_term;
mod taylor;

pub use order_term::{
    diffusion_order_term, drift_order_term, family_order_term, split_family_order_term, OrderTermPlan, OrderTermSplit,
};
pub use taylor::{taylor_polynomial, taylor_remainder_constant, TaylorRemainderBound};

use std::collections::HashMap;
use std::fmt;

use num_integer::Integer;

use crate::scalar::Scalar;

/// A tuple `(α_1, …, α_d)` of nonnegative integers.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// The multi-index with a single 1 at position `i`.
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut e = vec![0; dim];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    /// `|α| = Σ α_i`.
    pub fn length(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    /// `α! = Π α_i!`.
    pub fn factorial(&self) -> u128 {
        self.0.iter().map(|&a| factorial(a)).product()
    }

    /// `x^α = Π x_i^{α_i}`; equals one for the zero index.
    pub fn power<T: Scalar>(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.0.len());
        let mut acc = T::one();
        for (xi, &a) in x.iter().zip(&self.0) {
            for _ in 0..a {
                acc = acc * xi.clone();
            }
        }
        acc
    }

    /// Componentwise `self ≤ other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Componentwise difference, `None` if some entry would go negative.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// All multi-indices of dimension `dim` and length exactly `order`, in
    /// lexicographic order.
    pub fn all_of_length(dim: usize, order: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; dim];
        fill_length(&mut cur, 0, order as u32, &mut out);
        out
    }
}

fn fill_length(cur: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(MultiIndex(cur.clone()));
        cur[pos] = 0;
        return;
    }
    if cur.is_empty() {
        if remaining == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return;
    }
    for v in 0..=remaining {
        cur[pos] = v;
        fill_length(cur, pos + 1, remaining - v, out);
    }
    cur[pos] = 0;
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|a| a.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

pub(crate) fn factorial(n: u32) -> u128 {
    (1..=n as u128).product()
}

/// One term of the order-`k` partition sum.
///
/// `gamma[(j - 1) * dim + i]` holds `γ_{j,i}`: how many factors of `u_{j,i}`
/// enter the monomial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderPartition {
    pub k: usize,
    pub j_offset: usize,
    depth: usize,
    dim: usize,
    gamma: Vec<u32>,
}

impl OrderPartition {
    /// `γ_{j,i}` for `j ∈ 1..=N`, `i ∈ 0..d`.
    pub fn gamma(&self, j: usize, i: usize) -> u32 {
        self.gamma[(j - 1) * self.dim + i]
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The outer multi-index `α_i = Σ_j γ_{j,i}`.
    pub fn outer_index(&self) -> MultiIndex {
        let mut alpha = vec![0u32; self.dim];
        for j in 1..=self.depth {
            for (i, a) in alpha.iter_mut().enumerate() {
                *a += self.gamma(j, i);
            }
        }
        MultiIndex(alpha)
    }

    /// `jOffset + Σ j·γ_{j,i}`; always equals `k` for enumerated partitions.
    pub fn weighted_order(&self) -> usize {
        let mut s = self.j_offset;
        for j in 1..=self.depth {
            for i in 0..self.dim {
                s += j * self.gamma(j, i) as usize;
            }
        }
        s
    }

    /// The coefficient `(Π_i α_i!/Π_j γ_{j,i}!) / α!` as a reduced fraction
    /// `(numerator, denominator)`.
    pub fn weight(&self) -> (u128, u128) {
        let alpha = self.outer_index();
        let mut num: u128 = 1;
        for (i, &a) in alpha.entries().iter().enumerate() {
            let mut m = factorial(a);
            for j in 1..=self.depth {
                m /= factorial(self.gamma(j, i));
            }
            num *= m;
        }
        let den = alpha.factorial();
        let g = num.gcd(&den);
        (num / g, den / g)
    }

    /// Nonzero factors `(j, i, γ_{j,i})` of the monomial `Π u_{j,i}^{γ_{j,i}}`.
    pub fn factors(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        (1..=self.depth).flat_map(move |j| {
            (0..self.dim).filter_map(move |i| {
                let g = self.gamma(j, i);
                (g > 0).then_some((j, i, g))
            })
        })
    }

    /// Evaluates `Π u_{j,i}^{γ_{j,i}}`; `u[j]` is the coefficient vector `u_j`.
    pub fn monomial<T: Scalar>(&self, u: &[&[T]]) -> T {
        let mut acc = T::one();
        for (j, i, g) in self.factors() {
            for _ in 0..g {
                acc = acc * u[j][i].clone();
            }
        }
        acc
    }
}

/// Every partition with `jOffset + Σ_{i,j} j·γ_{j,i} = k`, `jOffset ≤ max_j_offset`,
/// ordered lexicographically by `(jOffset, γ)`.
pub fn enumerate_partitions(k: usize, depth: usize, dim: usize, max_j_offset: usize) -> Vec<OrderPartition> {
    let mut out = Vec::new();
    let cells = depth * dim;
    for j_offset in 0..=max_j_offset.min(k) {
        let mut gamma = vec![0u32; cells];
        assign_cells(&mut gamma, 0, k - j_offset, dim, &mut |g| {
            out.push(OrderPartition {
                k,
                j_offset,
                depth,
                dim,
                gamma: g.to_vec(),
            })
        });
    }
    out
}

fn assign_cells(gamma: &mut [u32], cell: usize, remaining: usize, dim: usize, emit: &mut dyn FnMut(&[u32])) {
    if cell == gamma.len() {
        if remaining == 0 {
            emit(gamma);
        }
        return;
    }
    let j = cell / dim + 1;
    for v in 0..=remaining / j {
        gamma[cell] = v as u32;
        assign_cells(gamma, cell + 1, remaining - v * j, dim, emit);
    }
    gamma[cell] = 0;
}

/// Number of partitions [`enumerate_partitions`] returns, computed by a
/// memoized recursion over cells instead of by enumeration.
pub fn count_partitions(k: usize, depth: usize, dim: usize, max_j_offset: usize) -> u64 {
    let mut memo = HashMap::new();
    (0..=max_j_offset.min(k))
        .map(|jo| count_cells(k - jo, 0, depth * dim, dim, &mut memo))
        .sum()
}

fn count_cells(
    remaining: usize,
    cell: usize,
    cells: usize,
    dim: usize,
    memo: &mut HashMap<(usize, usize), u64>,
) -> u64 {
    if cell == cells {
        return u64::from(remaining == 0);
    }
    if let Some(&c) = memo.get(&(remaining, cell)) {
        return c;
    }
    let j = cell / dim + 1;
    let c = (0..=remaining / j)
        .map(|v| count_cells(remaining - v * j, cell + 1, cells, dim, memo))
        .sum();
    memo.insert((remaining, cell), c);
    c
}
