//! Counting doubly stochastic matrices with entries on the grid
//! `{0, 1/(p-1), ..., 1}`.
//!
//! An `n x n` DSM is fixed by its leading `(n-1) x (n-1)` block. Scaling by
//! `p - 1` turns the block into integers in `0..p`, and the block extends to a
//! DSM iff
//!
//! 1. every row and column sum of the block is at most `p - 1`, and
//! 2. the block total is at least `(n - 2)(p - 1)`.
//!
//! `f(n, p) = p^((n-1)^2) - c1 - c2 + c12` where `c1`/`c2` count candidates
//! violating the first/second condition and `c12` those violating both.
//! Everything here is exact integer arithmetic.

use num_bigint::{BigInt, BigUint};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest `(n-1)^2 log2(p)` accepted by the enumeration routines.
pub const MAX_LOG2_CANDIDATES: f64 = 48.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CensusQuery {
    pub n: usize,
    pub p: usize,
}

impl CensusQuery {
    pub fn new(n: usize, p: usize) -> Result<Self> {
        if n < 2 || p < 2 {
            return Err(Error::Infeasible(format!(
                "need n >= 2 and p >= 2, got n = {n}, p = {p}"
            )));
        }
        Ok(Self { n, p })
    }

    /// Side of the free block, `n - 1`.
    pub fn side(&self) -> usize {
        self.n - 1
    }

    /// Upper bound on each row/column sum of the integerized block.
    pub fn line_cap(&self) -> u64 {
        self.p as u64 - 1
    }

    /// Minimum integerized block total.
    pub fn min_total(&self) -> u64 {
        (self.n as u64 - 2) * self.line_cap()
    }

    pub fn candidates(&self) -> u64 {
        (self.p as u64).pow((self.side() * self.side()) as u32)
    }

    fn check_enumerable(&self) -> Result<()> {
        let k = (self.side() * self.side()) as f64;
        if k * (self.p as f64).log2() > MAX_LOG2_CANDIDATES {
            return Err(Error::Infeasible(format!(
                "{}^{} candidates exceed the enumeration limit of 2^{MAX_LOG2_CANDIDATES}",
                self.p,
                self.side() * self.side()
            )));
        }
        Ok(())
    }
}

/// All vectors of length `len` over `0..p`, optionally only those with sum
/// at most `cap`, in odometer order (first entry fastest).
fn lines(len: usize, p: u64, cap: Option<u64>) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut digits = vec![0u64; len];
    loop {
        let sum: u64 = digits.iter().sum();
        if cap.is_none_or(|c| sum <= c) {
            out.push(digits.clone());
        }
        let mut pos = 0;
        loop {
            if pos == len {
                return out;
            }
            digits[pos] += 1;
            if digits[pos] < p {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Exact `f(n, p)` by enumerating admissible rows of the integerized block,
/// pruning as soon as a column sum passes the cap.
pub fn count_brute(q: &CensusQuery) -> Result<u64> {
    q.check_enumerable()?;
    let k = q.side();
    let cap = q.line_cap();
    let rows = lines(k, q.p as u64, Some(cap));

    fn descend(
        rows: &[Vec<u64>],
        depth: usize,
        k: usize,
        cols: &mut [u64],
        total: u64,
        cap: u64,
        min_total: u64,
    ) -> u64 {
        if depth == k {
            return u64::from(total >= min_total);
        }
        let mut count = 0;
        for row in rows {
            if cols.iter().zip(row).any(|(c, x)| c + x > cap) {
                continue;
            }
            cols.iter_mut().zip(row).for_each(|(c, x)| *c += x);
            let s: u64 = row.iter().sum();
            count += descend(rows, depth + 1, k, cols, total + s, cap, min_total);
            cols.iter_mut().zip(row).for_each(|(c, x)| *c -= x);
        }
        count
    }

    Ok(rows
        .par_iter()
        .map(|first| {
            let mut cols = first.clone();
            let s = first.iter().sum();
            descend(&rows, 1, k, &mut cols, s, cap, q.min_total())
        })
        .sum())
}

/// The quadruple sum for `n = 3`:
/// `sum over i in 1..=p, j,k in 1..=p-i+1, l in 1..=min(p-j+1, p-k+1)`
/// of the indicator `i + j + k + l - 3 >= p`.
pub fn f3_analytic(p: usize) -> Result<u64> {
    if p < 2 {
        return Err(Error::Infeasible(format!("need p >= 2, got {p}")));
    }
    let p = p as i64;
    let mut total = 0u64;
    for i in 1..=p {
        for j in 1..=p - i + 1 {
            for k in 1..=p - i + 1 {
                let l_max = (p - j + 1).min(p - k + 1);
                for l in 1..=l_max {
                    if i + j + k + l - 3 >= p {
                        total += 1;
                    }
                }
            }
        }
    }
    Ok(total)
}

/// Candidates whose integerized total is below `(n - 2)(p - 1)`.
pub fn c2_brute(q: &CensusQuery) -> Result<u64> {
    q.check_enumerable()?;
    let k = q.side() * q.side();
    let bound = q.min_total();

    // tuples of length `left` over 0..p with sum < `room`
    fn count(left: usize, room: u64, p: u64) -> u64 {
        if room == 0 {
            return 0;
        }
        if left == 0 {
            return 1;
        }
        (0..p.min(room)).map(|x| count(left - 1, room - x, p)).sum()
    }

    Ok(count(k, bound, q.p as u64))
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::ZERO;
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Closed form for `c2` by stars and bars with inclusion-exclusion over the
/// entries exceeding `p - 1`:
///
/// `c2 = sum_{s=0}^{(n-2)(p-1)-1} sum_{m=0}^{K} (-1)^m C(K, m) C(s - mp + K - 1, K - 1)`
///
/// with `K = (n-1)^2` and terms with `s - mp < 0` dropped. The sum over `s`
/// stops one short of `(n-2)(p-1)` because a total equal to the bound is
/// admissible, and the `s - mp = 0` term counts the single all-zero remainder.
pub fn c2_closed(q: &CensusQuery) -> BigUint {
    let k = (q.side() * q.side()) as u64;
    let p = q.p as u64;
    let mut total = BigInt::ZERO;
    for s in 0..q.min_total() {
        for m in 0..=k {
            let Some(rest) = s.checked_sub(m * p) else {
                break;
            };
            let term = BigInt::from(binomial(k, m) * binomial(rest + k - 1, k - 1));
            if m % 2 == 0 {
                total += term;
            } else {
                total -= term;
            }
        }
    }
    total
        .try_into()
        .expect("inclusion-exclusion count is non-negative")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Decomposition {
    pub n: usize,
    pub p: usize,
    pub total: u64,
    pub c1: u64,
    pub c2: u64,
    pub c12: u64,
    pub f: u64,
}

impl Decomposition {
    pub fn identity_holds(&self) -> bool {
        self.total + self.c12 == self.f + self.c1 + self.c2
    }
}

/// Classifies every candidate block, then checks
/// `total - c1 - c2 + c12` against [`count_brute`].
pub fn decomposition_check(q: &CensusQuery) -> Result<Decomposition> {
    q.check_enumerable()?;
    let k = q.side();
    let cap = q.line_cap();
    let min_total = q.min_total();
    let rows: Vec<(Vec<u64>, u64)> = lines(k, q.p as u64, None)
        .into_iter()
        .map(|r| {
            let s = r.iter().sum();
            (r, s)
        })
        .collect();

    #[derive(Default, Clone, Copy)]
    struct Tally {
        c1: u64,
        c2: u64,
        c12: u64,
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        rows: &[(Vec<u64>, u64)],
        depth: usize,
        k: usize,
        cols: &mut [u64],
        total: u64,
        row_violated: bool,
        cap: u64,
        min_total: u64,
        tally: &mut Tally,
    ) {
        if depth == k {
            let v1 = row_violated || cols.iter().any(|&c| c > cap);
            let v2 = total < min_total;
            tally.c1 += u64::from(v1);
            tally.c2 += u64::from(v2);
            tally.c12 += u64::from(v1 && v2);
            return;
        }
        for (row, s) in rows {
            cols.iter_mut().zip(row).for_each(|(c, x)| *c += x);
            walk(
                rows,
                depth + 1,
                k,
                cols,
                total + s,
                row_violated || *s > cap,
                cap,
                min_total,
                tally,
            );
            cols.iter_mut().zip(row).for_each(|(c, x)| *c -= x);
        }
    }

    let tally = rows
        .par_iter()
        .map(|(first, s)| {
            let mut tally = Tally::default();
            let mut cols = first.clone();
            walk(
                &rows,
                1,
                k,
                &mut cols,
                *s,
                *s > cap,
                cap,
                min_total,
                &mut tally,
            );
            tally
        })
        .reduce(Tally::default, |a, b| Tally {
            c1: a.c1 + b.c1,
            c2: a.c2 + b.c2,
            c12: a.c12 + b.c12,
        });

    let total = q.candidates();
    let f = count_brute(q)?;
    let d = Decomposition {
        n: q.n,
        p: q.p,
        total,
        c1: tally.c1,
        c2: tally.c2,
        c12: tally.c12,
        f,
    };
    if !d.identity_holds() {
        return Err(Error::Infeasible(format!(
            "decomposition identity failed: {d:?}"
        )));
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: usize, p: usize) -> CensusQuery {
        CensusQuery::new(n, p).unwrap()
    }

    #[test]
    fn query_validation() {
        assert!(CensusQuery::new(1, 3).is_err());
        assert!(CensusQuery::new(3, 1).is_err());
        // 7^2 * log2(2^2) = 98 > 48
        assert!(count_brute(&q(8, 4)).is_err());
        assert!(c2_brute(&q(8, 4)).is_err());
        assert!(f3_analytic(1).is_err());
    }

    #[test]
    fn brute_examples() {
        assert_eq!(count_brute(&q(3, 2)).unwrap(), 6);
        assert_eq!(count_brute(&q(5, 2)).unwrap(), 120);
        assert_eq!(count_brute(&q(3, 3)).unwrap(), 21);
        assert_eq!(count_brute(&q(2, 7)).unwrap(), 7);
    }

    #[test]
    fn three_by_three_census_by_hand() {
        // all 81 blocks over {0,1,2}; DSM iff lines <= 2 and total >= 2
        let mut count = 0;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        let lines_ok = a + b <= 2 && c + d <= 2 && a + c <= 2 && b + d <= 2;
                        if lines_ok && a + b + c + d >= 2 {
                            count += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(count, 21);
    }

    #[test]
    fn analytic_examples() {
        assert_eq!(f3_analytic(2).unwrap(), 6);
        assert_eq!(f3_analytic(3).unwrap(), 21);
        for p in 2..=12 {
            assert_eq!(
                f3_analytic(p).unwrap(),
                count_brute(&q(3, p)).unwrap(),
                "p = {p}"
            );
        }
    }

    #[test]
    fn c2_examples() {
        assert_eq!(c2_brute(&q(3, 3)).unwrap(), 5);
        assert_eq!(c2_brute(&q(3, 2)).unwrap(), 1);
        assert_eq!(c2_brute(&q(2, 9)).unwrap(), 0);
        assert_eq!(c2_closed(&q(3, 3)), BigUint::from(5u32));
        assert_eq!(c2_closed(&q(4, 2)), BigUint::from(10u32));
        assert_eq!(c2_closed(&q(3, 2)), BigUint::from(1u32));
        assert_eq!(c2_closed(&q(2, 9)), BigUint::ZERO);
    }

    #[test]
    fn decomposition_examples() {
        let d = decomposition_check(&q(3, 3)).unwrap();
        assert_eq!((d.total, d.f), (81, 21));
        let d = decomposition_check(&q(3, 2)).unwrap();
        assert_eq!((d.total, d.f, d.c1, d.c2, d.c12), (16, 6, 9, 1, 0));
        let d = decomposition_check(&q(4, 2)).unwrap();
        assert_eq!((d.total, d.f, d.c2), (512, 24, 10));
    }

    #[test]
    fn line_enumeration_order() {
        let l = lines(2, 3, Some(2));
        assert_eq!(l.len(), 6);
        assert_eq!(l[0], vec![0, 0]);
        assert_eq!(l[1], vec![1, 0]);
    }
}
