//! Reference pattern and expression pattern keys.
//!
//! Two references share a [`RpiKey`] when they read the same array through
//! the same infinite sub-lattice, so one is the other shifted by a whole
//! number of iterations. Two binary expressions share an [`EriKey`] when
//! their operands are pairwise equivalent and shifted by the same amount, so
//! one expression recomputes the other at a different iteration.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::ir::{ArrayRef, Leaf, NodeId, Op};
use crate::rational::Rational;

/// Per-level first offsets. A level that is absent has no offset (it does
/// not index the reference).
pub type Offsets = BTreeMap<usize, Rational>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RpiInfo {
    /// Level of each subscript, 0 for constant subscripts.
    pub index_list: Vec<usize>,
    /// Coefficient of each subscript, or the constant itself at level 0.
    pub index_coef: Vec<i64>,
    pub first_index_offset: Offsets,
    /// One entry per non-constant subscript: the residue of the offset for
    /// the first subscript of a level, the offset difference to that first
    /// subscript for later ones.
    pub index_delta: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RpiKey {
    pub name: String,
    pub index_list: Vec<usize>,
    pub index_coef: Vec<i64>,
    pub index_delta: Vec<Rational>,
}

fn residue(b: i64, a: i64) -> i64 {
    b.rem_euclid(a.abs())
}

pub fn compute_rpi_info(r: &ArrayRef) -> RpiInfo {
    let mut info = RpiInfo {
        index_list: Vec::with_capacity(r.subs.len()),
        index_coef: Vec::with_capacity(r.subs.len()),
        first_index_offset: BTreeMap::new(),
        index_delta: Vec::new(),
    };
    for s in &r.subs {
        if s.coef != 0 {
            info.index_list.push(s.level);
            info.index_coef.push(s.coef);
            let f = Rational::new(s.offset, s.coef);
            match info.first_index_offset.get(&s.level) {
                None => {
                    info.first_index_offset.insert(s.level, f);
                    info.index_delta.push(Rational::int(residue(s.offset, s.coef)));
                }
                Some(first) => info.index_delta.push(f - *first),
            }
        } else {
            info.index_list.push(0);
            info.index_coef.push(s.offset);
        }
    }
    info
}

pub fn rpi_key(r: &ArrayRef, info: &RpiInfo) -> RpiKey {
    RpiKey {
        name: r.name.clone(),
        index_list: info.index_list.clone(),
        index_coef: info.index_coef.clone(),
        index_delta: info.index_delta.clone(),
    }
}

/// Identity of one operand of a candidate expression.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OperandKey {
    Ref(RpiKey),
    Const(u64),
    Func(String),
    /// A loop-invariant factor times a leaf, produced by distribution.
    Scaled(Box<OperandKey>, Box<OperandKey>),
    /// A reference to an array written by the nest. Never equal to anything
    /// else.
    Opaque(NodeId),
}

impl OperandKey {
    pub fn is_opaque(&self) -> bool {
        match self {
            OperandKey::Opaque(_) => true,
            OperandKey::Scaled(a, b) => a.is_opaque() || b.is_opaque(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operand {
    pub key: OperandKey,
    pub fio: Offsets,
    pub inverted: bool,
}

impl Operand {
    /// True when the operand does not vary with any loop index.
    pub fn invariant(&self) -> bool {
        self.fio.is_empty()
    }
}

/// Operand for a leaf. `written` lists arrays assigned by the nest.
pub fn leaf_operand(leaf: &Leaf, id: NodeId, written: &BTreeSet<String>) -> Operand {
    match leaf {
        Leaf::Ref(r) => {
            if written.contains(&r.name) {
                Operand { key: OperandKey::Opaque(id), fio: BTreeMap::new(), inverted: false }
            } else {
                let info = compute_rpi_info(r);
                Operand { key: OperandKey::Ref(rpi_key(r, &info)), fio: info.first_index_offset, inverted: false }
            }
        }
        Leaf::Const(v) => Operand { key: OperandKey::Const(v.to_bits()), fio: BTreeMap::new(), inverted: false },
        Leaf::Func(f) => Operand { key: OperandKey::Func(f.clone()), fio: BTreeMap::new(), inverted: false },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EriKey {
    pub op: Op,
    pub left: OperandKey,
    pub right: OperandKey,
    /// Set when the right operand is subtracted or divided.
    pub right_inverted: bool,
    /// Per-level difference of first offsets over levels both operands use.
    pub delta: Vec<(usize, Rational)>,
}

impl EriKey {
    pub fn delta_at(&self, level: usize) -> Option<Rational> {
        self.delta.iter().find(|(l, _)| *l == level).map(|(_, d)| *d)
    }

    /// True when an operand is opaque or both operands are loop invariant.
    pub fn never_extracted(&self, left: &Operand, right: &Operand) -> bool {
        self.left.is_opaque() || self.right.is_opaque() || (left.invariant() && right.invariant())
    }
}

/// Outcome of [`compute_eri`]: the key and how the operands were arranged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Eri {
    pub key: EriKey,
    /// Operands were exchanged to reach canonical order.
    pub swapped: bool,
    /// Both inversion flags were flipped; the expression equals the negation
    /// (or reciprocal) of the canonical one.
    pub negated: bool,
}

fn fio_order(a: &Offsets, b: &Offsets) -> core::cmp::Ordering {
    a.iter().cmp(b.iter())
}

/// Builds the expression key of `x op y`.
pub fn compute_eri(op: Op, x: &Operand, y: &Operand) -> Eri {
    let mut swapped = false;
    let (mut a, mut b) = (x, y);
    if op.commutative() {
        let ord = a.key.cmp(&b.key).then_with(|| fio_order(&a.fio, &b.fio)).then(a.inverted.cmp(&b.inverted));
        if ord == core::cmp::Ordering::Greater {
            core::mem::swap(&mut a, &mut b);
            swapped = true;
        }
    }
    let mut negated = false;
    let (mut ai, mut bi) = (a.inverted, b.inverted);
    if ai {
        ai = false;
        bi = !bi;
        negated = true;
    }
    debug_assert!(!ai);
    let delta = a
        .fio
        .iter()
        .filter_map(|(l, fa)| b.fio.get(l).map(|fb| (*l, *fa - *fb)))
        .collect();
    Eri {
        key: EriKey { op, left: a.key.clone(), right: b.key.clone(), right_inverted: bi, delta },
        swapped,
        negated,
    }
}

/// Independent check of sub-lattice equality: enumerates the points `x`
/// generates for loop indices in `[-window, window]` and tests each for
/// membership in the lattice of `y` by solving the subscript equations, and
/// the other way round. Both references must name the same array with the
/// same number of subscripts.
pub fn lattice_oracle_equal(x: &ArrayRef, y: &ArrayRef, window: i64) -> bool {
    fn member(point: &[i64], r: &ArrayRef) -> bool {
        let mut fixed: BTreeMap<usize, i64> = BTreeMap::new();
        for (p, s) in point.iter().zip(&r.subs) {
            if s.coef == 0 {
                if *p != s.offset {
                    return false;
                }
                continue;
            }
            let diff = p - s.offset;
            if diff % s.coef != 0 {
                return false;
            }
            let t = diff / s.coef;
            if *fixed.entry(s.level).or_insert(t) != t {
                return false;
            }
        }
        true
    }
    fn covered(x: &ArrayRef, y: &ArrayRef, window: i64) -> bool {
        let levels: Vec<usize> = x.levels().into_iter().collect();
        let mut idx: Vec<i64> = alloc::vec![-window; levels.len()];
        loop {
            let point: Vec<i64> = x
                .subs
                .iter()
                .map(|s| {
                    if s.coef == 0 {
                        s.offset
                    } else {
                        let k = levels.iter().position(|l| *l == s.level).unwrap();
                        s.coef * idx[k] + s.offset
                    }
                })
                .collect();
            if !member(&point, y) {
                return false;
            }
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return true;
                }
                idx[k] += 1;
                if idx[k] <= window {
                    break;
                }
                idx[k] = -window;
                k += 1;
            }
        }
    }
    x.name == y.name && x.subs.len() == y.subs.len() && covered(x, y, window) && covered(y, x, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Sub;
    use proptest::prelude::*;

    fn r(subs: &[(usize, i64, i64)]) -> ArrayRef {
        ArrayRef {
            name: "A".into(),
            subs: subs.iter().map(|&(level, coef, offset)| Sub { level, coef, offset }).collect(),
        }
    }

    fn key(x: &ArrayRef) -> RpiKey {
        rpi_key(x, &compute_rpi_info(x))
    }

    #[test]
    fn residues_distinguish_even_and_odd() {
        assert_eq!(key(&r(&[(1, 2, 1)])), key(&r(&[(1, 2, 3)])));
        assert_ne!(key(&r(&[(1, 2, 0)])), key(&r(&[(1, 2, 1)])));
        assert_ne!(key(&r(&[(1, 2, 0)])), key(&r(&[(1, 3, 0)])));
        assert_eq!(key(&r(&[(1, -2, 1)])), key(&r(&[(1, -2, -1)])));
    }

    #[test]
    fn repeated_level_needs_equal_shift() {
        // A[i][i] and A[i+1][i+1] are shifts of each other, A[i][i+1] is not.
        assert_eq!(key(&r(&[(1, 1, 0), (1, 1, 0)])), key(&r(&[(1, 1, 1), (1, 1, 1)])));
        assert_ne!(key(&r(&[(1, 1, 0), (1, 1, 0)])), key(&r(&[(1, 1, 0), (1, 1, 1)])));
        // A[2i][i] and A[2i+2][i+1].
        assert_eq!(key(&r(&[(1, 2, 0), (1, 1, 0)])), key(&r(&[(1, 2, 2), (1, 1, 1)])));
    }

    #[test]
    fn first_offsets_are_rational() {
        let info = compute_rpi_info(&r(&[(2, 2, 1), (0, 0, 5), (1, 1, -1)]));
        assert_eq!(info.index_list, [2, 0, 1]);
        assert_eq!(info.index_coef, [2, 5, 1]);
        assert_eq!(info.first_index_offset[&2], Rational::new(1, 2));
        assert_eq!(info.first_index_offset[&1], Rational::int(-1));
        assert_eq!(info.index_delta, [Rational::int(1), Rational::int(0)]);
    }

    fn op(key: OperandKey, fio: &[(usize, i64)], inverted: bool) -> Operand {
        Operand { key, fio: fio.iter().map(|&(l, v)| (l, Rational::int(v))).collect(), inverted }
    }

    #[test]
    fn commutative_operands_are_sorted() {
        let a = || OperandKey::Ref(key(&r(&[(1, 1, 0)])));
        let b = || {
            let mut x = r(&[(1, 1, 0)]);
            x.name = "B".into();
            OperandKey::Ref(key(&x))
        };
        let e1 = compute_eri(Op::Add, &op(a(), &[(1, 0)], false), &op(b(), &[(1, 0)], false));
        let e2 = compute_eri(Op::Add, &op(b(), &[(1, 1)], false), &op(a(), &[(1, 1)], false));
        assert_eq!(e1.key, e2.key);
        assert!(e2.swapped && !e1.swapped);
        let e3 = compute_eri(Op::Sub, &op(b(), &[(1, 1)], false), &op(a(), &[(1, 1)], false));
        assert_ne!(e1.key.left, e3.key.left);
    }

    #[test]
    fn same_operand_orders_by_offsets() {
        let a = || OperandKey::Ref(key(&r(&[(1, 1, 0)])));
        let e1 = compute_eri(Op::Add, &op(a(), &[(1, 1)], false), &op(a(), &[(1, 0)], false));
        let e2 = compute_eri(Op::Add, &op(a(), &[(1, 3)], false), &op(a(), &[(1, 4)], false));
        assert_eq!(e1.key, e2.key);
        assert_eq!(e1.key.delta, [(1, Rational::int(-1))]);
    }

    #[test]
    fn inversion_is_normalized() {
        let a = || OperandKey::Ref(key(&r(&[(1, 1, 0)])));
        let mut bref = r(&[(1, 1, 0)]);
        bref.name = "B".into();
        let b = || OperandKey::Ref(key(&bref));
        // -A + B and A - B share a key; the first is the negation.
        let e1 = compute_eri(Op::Add, &op(a(), &[(1, 0)], true), &op(b(), &[(1, 0)], false));
        let e2 = compute_eri(Op::Add, &op(a(), &[(1, 2)], false), &op(b(), &[(1, 2)], true));
        assert_eq!(e1.key, e2.key);
        assert!(e1.negated && !e2.negated);
        assert!(e1.key.right_inverted);
    }

    #[test]
    fn oracle_agrees_on_known_pairs() {
        assert!(lattice_oracle_equal(&r(&[(1, 2, 1)]), &r(&[(1, 2, 5)]), 12));
        assert!(!lattice_oracle_equal(&r(&[(1, 2, 0)]), &r(&[(1, 2, 1)]), 12));
        assert!(!lattice_oracle_equal(&r(&[(1, 1, 0), (1, 1, 0)]), &r(&[(1, 1, 0), (1, 1, 1)]), 12));
        assert!(lattice_oracle_equal(&r(&[(0, 0, 3), (2, 3, 1)]), &r(&[(0, 0, 3), (2, 3, -2)]), 12));
    }

    /// Pairs that share the level of every subscript and the sign of every
    /// coefficient, so lattice equality hinges on magnitudes and offsets.
    fn pair() -> impl Strategy<Value = (ArrayRef, ArrayRef)> {
        (1usize..=3, 1usize..=3)
            .prop_flat_map(|(m, n)| {
                (
                    proptest::collection::vec((0..=m, 1i64..=4, -6i64..=6, any::<bool>()), n),
                    proptest::collection::vec((1i64..=4, -6i64..=6, 0u8..3), n),
                    proptest::collection::vec(-2i64..=2, 3),
                )
            })
            .prop_map(|(xs, ys, shift)| {
                let x = r(&xs.iter().map(|&(l, a, b, neg)| if l == 0 { (0, 0, b) } else { (l, if neg { -a } else { a }, b) }).collect::<Vec<_>>());
                let y = r(&xs
                    .iter()
                    .zip(&ys)
                    .map(|(&(l, a, b, neg), &(a2, b2, mode))| {
                        if l == 0 {
                            (0, 0, if mode == 0 { b } else { b2 })
                        } else {
                            let a0 = if neg { -a } else { a };
                            match mode {
                                0 => (l, a0, b + a0 * shift[l - 1]),
                                1 => (l, a0, b2),
                                _ => (l, if neg { -a2 } else { a2 }, b2),
                            }
                        }
                    })
                    .collect::<Vec<_>>());
                (x, y)
            })
    }

    proptest! {
        #[test]
        fn rpi_matches_lattice_oracle((x, y) in pair()) {
            prop_assert_eq!(key(&x) == key(&y), lattice_oracle_equal(&x, &y, 12));
        }

        #[test]
        fn shifted_references_share_a_key(
            subs in proptest::collection::vec((1usize..=3, -4i64..=4, -6i64..=6), 1..=3),
            t in proptest::collection::vec(-3i64..=3, 3),
        ) {
            let subs: Vec<_> = subs.into_iter().map(|(l, a, b)| if a == 0 { (0, 0, b) } else { (l, a, b) }).collect();
            let x = r(&subs);
            let y = r(&subs.iter().map(|&(l, a, b)| if l == 0 { (l, a, b) } else { (l, a, b + a * t[l - 1]) }).collect::<Vec<_>>());
            prop_assert_eq!(key(&x), key(&y));
            let fx = compute_rpi_info(&x).first_index_offset;
            let fy = compute_rpi_info(&y).first_index_offset;
            for (l, v) in &fx {
                prop_assert_eq!(fy[l] - *v, Rational::int(t[*l - 1]));
            }
        }
    }
}
