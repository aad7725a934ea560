//! Bit-exact reduced-precision floating-point emulation.
//!
//! A floating-point implementation ([`Fpi`]) is a per-operation-class budget
//! of significand bits. Applying it chops both operands to the budget, runs the
//! native IEEE-754 operation, then chops the result. Chopping always rounds
//! toward zero by clearing the low bits of the explicit mantissa field; sign
//! and exponent are never touched.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// IEEE-754 binary format subject to tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Width {
    Single,
    Double,
}

impl Width {
    pub const ALL: [Width; 2] = [Width::Single, Width::Double];

    /// Significand bits including the implicit leading one (24 / 53).
    pub const fn full_mantissa(self) -> u32 {
        match self {
            Width::Single => 24,
            Width::Double => 53,
        }
    }

    /// Stored fraction bits (23 / 52).
    pub const fn explicit_bits(self) -> u32 {
        self.full_mantissa() - 1
    }

    pub const fn exponent_bits(self) -> u32 {
        match self {
            Width::Single => 8,
            Width::Double => 11,
        }
    }

    pub const fn format_bits(self) -> u32 {
        match self {
            Width::Single => 32,
            Width::Double => 64,
        }
    }

    pub(crate) const fn index(self) -> usize {
        match self {
            Width::Single => 0,
            Width::Double => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Width::Single => "single",
            Width::Double => "double",
        }
    }

    pub fn check_bits(self, bits: u32) -> Result<()> {
        if (1..=self.full_mantissa()).contains(&bits) {
            Ok(())
        } else {
            Err(Error::BitsOutOfRange { bits, max: self.full_mantissa(), width: self })
        }
    }
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Width {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" | "f32" | "32" => Ok(Width::Single),
            "double" | "f64" | "64" => Ok(Width::Double),
            other => Err(Error::Config(format!("unknown width `{other}`"))),
        }
    }
}

/// The instrumented arithmetic classes. Everything else runs natively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpClass {
    Add,
    Sub,
    Mul,
    Div,
}

impl OpClass {
    pub const ALL: [OpClass; 4] = [OpClass::Add, OpClass::Sub, OpClass::Mul, OpClass::Div];

    pub(crate) const fn index(self) -> usize {
        match self {
            OpClass::Add => 0,
            OpClass::Sub => 1,
            OpClass::Mul => 2,
            OpClass::Div => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OpClass::Add => "add",
            OpClass::Sub => "sub",
            OpClass::Mul => "mul",
            OpClass::Div => "div",
        }
    }
}

impl fmt::Display for OpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A reduced-precision arithmetic implementation: one significand budget per
/// operation class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fpi {
    id: u16,
    width: Width,
    bits: [u32; 4],
}

impl Fpi {
    pub fn new(id: u16, width: Width, add: u32, sub: u32, mul: u32, div: u32) -> Result<Self> {
        let bits = [add, sub, mul, div];
        for b in bits {
            width.check_bits(b)?;
        }
        Ok(Self { id, width, bits })
    }

    /// Same budget for all four classes.
    pub fn uniform(id: u16, width: Width, bits: u32) -> Result<Self> {
        Self::new(id, width, bits, bits, bits, bits)
    }

    /// Full precision; reproduces native arithmetic bit for bit.
    pub fn identity(width: Width) -> Self {
        let k = width.full_mantissa();
        Self { id: 0, width, bits: [k; 4] }
    }

    pub fn id(&self) -> u16 {
        self.id
    }

    pub fn width(&self) -> Width {
        self.width
    }

    pub fn bits(&self, op: OpClass) -> u32 {
        self.bits[op.index()]
    }

    /// Significand bits used when values governed by this implementation are
    /// moved to or from memory.
    pub fn storage_bits(&self) -> u32 {
        self.bits.iter().copied().max().unwrap_or(self.width.full_mantissa())
    }

    pub fn is_identity(&self) -> bool {
        self.bits.iter().all(|&b| b == self.width.full_mantissa())
    }
}

/// A raw IEEE-754 bit pattern tagged with its format. The bit pattern is
/// authoritative; [`FpValue::value`] decodes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FpValue {
    bits: u64,
    width: Width,
}

impl FpValue {
    pub fn from_f32(x: f32) -> Self {
        Self { bits: u64::from(x.to_bits()), width: Width::Single }
    }

    pub fn from_f64(x: f64) -> Self {
        Self { bits: x.to_bits(), width: Width::Double }
    }

    /// Bits above the format width are discarded.
    pub fn from_bits(bits: u64, width: Width) -> Self {
        let bits = match width {
            Width::Single => bits & 0xffff_ffff,
            Width::Double => bits,
        };
        Self { bits, width }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn width(&self) -> Width {
        self.width
    }

    pub fn value(&self) -> f64 {
        match self.width {
            Width::Single => f64::from(f32::from_bits(self.bits as u32)),
            Width::Double => f64::from_bits(self.bits),
        }
    }

    /// Fixed-width lowercase hex: 8 digits for single, 16 for double.
    pub fn hex(&self) -> String {
        hex_bits(self.bits, self.width)
    }
}

impl fmt::Display for FpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex())
    }
}

pub(crate) fn hex_bits(bits: u64, width: Width) -> String {
    match width {
        Width::Single => format!("{:08x}", bits as u32),
        Width::Double => format!("{bits:016x}"),
    }
}

#[inline]
fn exponent_all_ones(bits: u64, width: Width) -> bool {
    let e = width.exponent_bits();
    let mask = (1u64 << e) - 1;
    (bits >> width.explicit_bits()) & mask == mask
}

/// Chop a raw pattern to `k` significand bits. `k` must already be valid.
#[inline]
pub(crate) fn truncate_raw(bits: u64, k: u32, width: Width) -> u64 {
    debug_assert!((1..=width.full_mantissa()).contains(&k));
    let drop = width.full_mantissa() - k;
    if drop == 0 || exponent_all_ones(bits, width) {
        return bits;
    }
    bits & !((1u64 << drop) - 1)
}

#[inline]
pub(crate) fn manipulated_raw(bits: u64, width: Width) -> u32 {
    let explicit = width.explicit_bits();
    let field = bits & ((1u64 << explicit) - 1);
    let tz = if field == 0 { explicit } else { field.trailing_zeros().min(explicit) };
    width.full_mantissa() - tz
}

/// Keep the top `k` significand bits of `x` (implicit bit included),
/// zeroing the rest. Zero, infinities and NaN are returned unchanged;
/// subnormals are masked the same way as normals.
pub fn truncate_mantissa(x: FpValue, k: u32, width: Width) -> Result<FpValue> {
    if x.width != width {
        return Err(Error::WidthMismatch { expected: width, found: x.width });
    }
    width.check_bits(k)?;
    Ok(FpValue { bits: truncate_raw(x.bits, k, width), width })
}

/// Significand bits in use: full mantissa width minus the number of trailing
/// zeros in the explicit field. Zero therefore counts as 1.
pub fn manipulated_bits(x: FpValue) -> u32 {
    manipulated_raw(x.bits, x.width)
}

/// Run `op` on `a` and `b` under `fpi`: chop the operands, compute natively,
/// chop the result.
pub fn apply_fpi(op: OpClass, a: FpValue, b: FpValue, fpi: &Fpi) -> Result<FpValue> {
    let width = fpi.width();
    for v in [a, b] {
        if v.width != width {
            return Err(Error::WidthMismatch { expected: width, found: v.width });
        }
    }
    let k = fpi.bits(op);
    let bits = match width {
        Width::Single => {
            let x = f32::from_raw(a.bits).truncated(k);
            let y = f32::from_raw(b.bits).truncated(k);
            f32::native(op, x, y).truncated(k).to_raw()
        }
        Width::Double => {
            let x = f64::from_raw(a.bits).truncated(k);
            let y = f64::from_raw(b.bits).truncated(k);
            f64::native(op, x, y).truncated(k).to_raw()
        }
    };
    Ok(FpValue { bits, width })
}

/// Native float types the emulation layer operates on.
pub trait Real: Copy + PartialOrd + fmt::Debug + Send + Sync + 'static {
    const WIDTH: Width;

    fn to_raw(self) -> u64;
    fn from_raw(bits: u64) -> Self;
    fn native(op: OpClass, a: Self, b: Self) -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    #[inline]
    fn truncated(self, k: u32) -> Self {
        Self::from_raw(truncate_raw(self.to_raw(), k, Self::WIDTH))
    }

    #[inline]
    fn manipulated_bits(self) -> u32 {
        manipulated_raw(self.to_raw(), Self::WIDTH)
    }

    fn value(self) -> FpValue {
        FpValue { bits: self.to_raw(), width: Self::WIDTH }
    }
}

impl Real for f32 {
    const WIDTH: Width = Width::Single;

    #[inline]
    fn to_raw(self) -> u64 {
        u64::from(self.to_bits())
    }

    #[inline]
    fn from_raw(bits: u64) -> Self {
        f32::from_bits(bits as u32)
    }

    #[inline]
    fn native(op: OpClass, a: Self, b: Self) -> Self {
        match op {
            OpClass::Add => a + b,
            OpClass::Sub => a - b,
            OpClass::Mul => a * b,
            OpClass::Div => a / b,
        }
    }

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    const WIDTH: Width = Width::Double;

    #[inline]
    fn to_raw(self) -> u64 {
        self.to_bits()
    }

    #[inline]
    fn from_raw(bits: u64) -> Self {
        f64::from_bits(bits)
    }

    #[inline]
    fn native(op: OpClass, a: Self, b: Self) -> Self {
        match op {
            OpClass::Add => a + b,
            OpClass::Sub => a - b,
            OpClass::Mul => a * b,
            OpClass::Div => a / b,
        }
    }

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(self) -> f64 {
        self
    }
}
