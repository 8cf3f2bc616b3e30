//! Exact rational forms of derived constants.
//!
//! For the power-law daughter `B(z) = (ν+2) z^ν` with rational `ν` and `m` and
//! an integer power `p`, the fragmentation moments and the logarithmic moment
//! are rational. The critical mass carries a factor `1/ln 2`, so it is exposed
//! through the rational product `ρ★ · ln 2`.

use core::cmp::Ordering;
use core::fmt;

/// A reduced fraction with `i128` numerator and positive denominator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Ratio {
    num: i128,
    den: i128,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

impl Ratio {
    pub const ZERO: Ratio = Ratio { num: 0, den: 1 };
    pub const ONE: Ratio = Ratio { num: 1, den: 1 };

    /// `num/den` in lowest terms; `None` for a zero denominator.
    pub fn new(num: i128, den: i128) -> Option<Ratio> {
        if den == 0 {
            return None;
        }
        let g = gcd(num, den);
        let sign = if den < 0 { -1 } else { 1 };
        Some(Ratio {
            num: sign * num / g,
            den: sign * den / g,
        })
    }

    pub fn from_int(n: i64) -> Ratio {
        Ratio { num: n as i128, den: 1 }
    }

    /// The exact value of a finite `f64`, if it fits in `i128` parts.
    pub fn from_f64(x: f64) -> Option<Ratio> {
        if !x.is_finite() {
            return None;
        }
        if x == 0.0 {
            return Some(Ratio::ZERO);
        }
        let bits = x.to_bits();
        let sign: i128 = if bits >> 63 == 1 { -1 } else { 1 };
        let exp_bits = ((bits >> 52) & 0x7ff) as i32;
        let frac = (bits & ((1u64 << 52) - 1)) as i128;
        let (mantissa, exp) = if exp_bits == 0 {
            (frac, -1074)
        } else {
            (frac | (1i128 << 52), exp_bits - 1075)
        };
        // strip trailing zero bits so that the shifts stay small
        let tz = mantissa.trailing_zeros() as i32;
        let mantissa = mantissa >> tz;
        let exp = exp + tz;
        if exp >= 0 {
            if exp > 126 - 53 {
                return None;
            }
            Ratio::new(sign * (mantissa << exp), 1)
        } else {
            if -exp > 126 {
                return None;
            }
            Ratio::new(sign * mantissa, 1i128 << (-exp))
        }
    }

    pub fn numer(&self) -> i128 {
        self.num
    }

    pub fn denom(&self) -> i128 {
        self.den
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn checked_add(self, o: Ratio) -> Option<Ratio> {
        let g = gcd(self.den, o.den);
        let l = (self.den / g).checked_mul(o.den)?;
        let a = self.num.checked_mul(l / self.den)?;
        let b = o.num.checked_mul(l / o.den)?;
        Ratio::new(a.checked_add(b)?, l)
    }

    pub fn checked_neg(self) -> Option<Ratio> {
        Some(Ratio {
            num: self.num.checked_neg()?,
            den: self.den,
        })
    }

    pub fn checked_sub(self, o: Ratio) -> Option<Ratio> {
        self.checked_add(o.checked_neg()?)
    }

    pub fn checked_mul(self, o: Ratio) -> Option<Ratio> {
        let g1 = gcd(self.num, o.den).max(1);
        let g2 = gcd(o.num, self.den).max(1);
        let n = (self.num / g1).checked_mul(o.num / g2)?;
        let d = (self.den / g2).checked_mul(o.den / g1)?;
        Ratio::new(n, d)
    }

    pub fn checked_div(self, o: Ratio) -> Option<Ratio> {
        if o.num == 0 {
            return None;
        }
        self.checked_mul(Ratio::new(o.den, o.num)?)
    }

    pub fn checked_pow(self, p: u32) -> Option<Ratio> {
        let mut acc = Ratio::ONE;
        for _ in 0..p {
            acc = acc.checked_mul(self)?;
        }
        Some(acc)
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        // denominators are positive; fall back to f64 on overflow
        match (self.num.checked_mul(other.den), other.num.checked_mul(self.den)) {
            (Some(a), Some(b)) => a.cmp(&b),
            _ => self
                .to_f64()
                .partial_cmp(&other.to_f64())
                .unwrap_or(Ordering::Equal),
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// `𝔟_{m,p} = (ν+2)^p / (m + pν + 1)` for the power-law daughter, or `None`
/// when `(m, p)` is not admissible or the arithmetic overflows.
pub fn power_law_frag_moment(nu: Ratio, m: Ratio, p: u32) -> Option<Ratio> {
    let minus_one = Ratio::from_int(-1);
    let pnu = Ratio::from_int(p as i64).checked_mul(nu)?;
    let shifted = m.checked_add(pnu)?;
    if p < 1 || m <= minus_one || shifted <= minus_one {
        return None;
    }
    let two = Ratio::from_int(2);
    nu.checked_add(two)?
        .checked_pow(p)?
        .checked_div(shifted.checked_add(Ratio::ONE)?)
}

/// `∫ z |ln z| B_ν(z) dz = 1/(ν+2)`.
pub fn power_law_b_ln(nu: Ratio) -> Option<Ratio> {
    Ratio::ONE.checked_div(nu.checked_add(Ratio::from_int(2))?)
}

/// `ρ★ · ln 2 = a0 𝔟_ln / (2 K0)`.
pub fn rho_star_times_ln2(a0: Ratio, k0: Ratio, b_ln: Ratio) -> Option<Ratio> {
    a0.checked_mul(b_ln)?
        .checked_div(Ratio::from_int(2).checked_mul(k0)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_conversion_is_exact() {
        assert_eq!(Ratio::from_f64(-0.5), Ratio::new(-1, 2));
        assert_eq!(Ratio::from_f64(1.5), Ratio::new(3, 2));
        assert_eq!(Ratio::from_f64(8.0), Ratio::new(8, 1));
        let r = Ratio::from_f64(0.2).unwrap();
        assert_eq!(r.to_f64(), 0.2);
    }

    #[test]
    fn closed_forms() {
        let nu0 = Ratio::ZERO;
        // 𝔟_{1/2,2} = 4 / (3/2) = 8/3
        let half = Ratio::new(1, 2).unwrap();
        assert_eq!(power_law_frag_moment(nu0, half, 2), Ratio::new(8, 3));
        // 𝔟_{1,1} = 1 for any ν
        for nu in [Ratio::new(-3, 2).unwrap(), Ratio::new(-1, 1).unwrap(), nu0] {
            assert_eq!(power_law_frag_moment(nu, Ratio::ONE, 1), Some(Ratio::ONE));
        }
        // boundary m + pν = -1 is excluded
        assert_eq!(power_law_frag_moment(Ratio::from_int(-1), Ratio::ZERO, 1), None);
        assert_eq!(power_law_b_ln(nu0), Ratio::new(1, 2));
        let one = Ratio::ONE;
        assert_eq!(rho_star_times_ln2(one, one, Ratio::new(1, 2).unwrap()), Ratio::new(1, 4));
    }
}
