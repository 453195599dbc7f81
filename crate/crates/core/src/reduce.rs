//! Commutative reduction operators over fixed-width little-endian elements.

use alloc::vec::Vec;
use core::fmt;

/// Element types understood by the built-in operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Datatype {
    I32,
    U32,
    I64,
    U64,
    F64,
}

impl Datatype {
    pub fn width(self) -> usize {
        match self {
            Datatype::I32 | Datatype::U32 => 4,
            Datatype::I64 | Datatype::U64 | Datatype::F64 => 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BuiltinOp {
    Sum,
    Min,
    Max,
}

/// Combines `src` into `acc` element by element; both have the same length.
pub type CombineFn = fn(acc: &mut [u8], src: &[u8]);

/// An associative, commutative operator with an identity element.
#[derive(Clone)]
pub struct ReduceOp {
    name: &'static str,
    width: usize,
    identity: Vec<u8>,
    combine: CombineFn,
}

impl fmt::Debug for ReduceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReduceOp").field("name", &self.name).field("width", &self.width).finish()
    }
}

impl PartialEq for ReduceOp {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.width == other.width && self.identity == other.identity
    }
}

macro_rules! elementwise {
    ($t:ty, $f:expr) => {{
        fn apply(acc: &mut [u8], src: &[u8]) {
            const W: usize = core::mem::size_of::<$t>();
            for (a, s) in acc.chunks_exact_mut(W).zip(src.chunks_exact(W)) {
                let x = <$t>::from_le_bytes(a.try_into().unwrap());
                let y = <$t>::from_le_bytes(s.try_into().unwrap());
                let f: fn($t, $t) -> $t = $f;
                a.copy_from_slice(&f(x, y).to_le_bytes());
            }
        }
        apply as CombineFn
    }};
}

macro_rules! builtin_for {
    ($t:ty, $op:expr, $ident_min:expr, $ident_max:expr, $add:expr) => {
        match $op {
            BuiltinOp::Sum => ("sum", (0 as $t).to_le_bytes().to_vec(), elementwise!($t, $add)),
            BuiltinOp::Min => ("min", $ident_min.to_le_bytes().to_vec(), elementwise!($t, |a, b| if b < a { b } else { a })),
            BuiltinOp::Max => ("max", $ident_max.to_le_bytes().to_vec(), elementwise!($t, |a, b| if b > a { b } else { a })),
        }
    };
}

impl ReduceOp {
    /// A built-in operator; integer sums wrap.
    pub fn builtin(dt: Datatype, op: BuiltinOp) -> Self {
        let (name, identity, combine): (&'static str, Vec<u8>, CombineFn) = match dt {
            Datatype::I32 => builtin_for!(i32, op, i32::MAX, i32::MIN, |a, b| a.wrapping_add(b)),
            Datatype::U32 => builtin_for!(u32, op, u32::MAX, u32::MIN, |a, b| a.wrapping_add(b)),
            Datatype::I64 => builtin_for!(i64, op, i64::MAX, i64::MIN, |a, b| a.wrapping_add(b)),
            Datatype::U64 => builtin_for!(u64, op, u64::MAX, u64::MIN, |a, b| a.wrapping_add(b)),
            Datatype::F64 => match op {
                BuiltinOp::Sum => ("sum", 0f64.to_le_bytes().to_vec(), elementwise!(f64, |a, b| a + b)),
                BuiltinOp::Min => ("min", f64::INFINITY.to_le_bytes().to_vec(), elementwise!(f64, f64::min)),
                BuiltinOp::Max => ("max", f64::NEG_INFINITY.to_le_bytes().to_vec(), elementwise!(f64, f64::max)),
            },
        };
        ReduceOp { name, width: dt.width(), identity, combine }
    }

    /// A user-supplied operator; `combine` must be associative and commutative
    /// and `identity` must be its neutral element.
    pub fn custom(name: &'static str, identity: Vec<u8>, combine: CombineFn) -> Self {
        assert!(!identity.is_empty(), "element width must be positive");
        ReduceOp { name, width: identity.len(), identity, combine }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn identity(&self) -> &[u8] {
        &self.identity
    }

    /// Overwrites `buf` with identity elements.
    pub fn fill_identity(&self, buf: &mut [u8]) {
        debug_assert_eq!(buf.len() % self.width, 0);
        for chunk in buf.chunks_exact_mut(self.width) {
            chunk.copy_from_slice(&self.identity);
        }
    }

    /// `acc[i] = acc[i] ⊕ src[i]` for every element.
    pub fn combine(&self, acc: &mut [u8], src: &[u8]) {
        assert_eq!(acc.len(), src.len(), "reduce operands differ in length");
        assert_eq!(acc.len() % self.width, 0, "reduce operand is not a whole number of elements");
        (self.combine)(acc, src);
    }
}
