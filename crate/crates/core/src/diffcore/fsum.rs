//! Correctly rounded summation.
//!
//! Port of Shewchuk's adaptive partials algorithm (the one behind Python's
//! `math.fsum`). The result does not depend on the order of the inputs, which
//! is what makes permuted weight vectors produce bit-identical densities.

const INLINE: usize = 64;

/// Partials live on the stack; wide dynamic ranges with subnormals can need
/// more, which spill to the heap.
struct Partials {
    inline: [f64; INLINE],
    spill: Vec<f64>,
    len: usize,
}

impl Partials {
    fn new() -> Self {
        Partials {
            inline: [0.0; INLINE],
            spill: Vec::new(),
            len: 0,
        }
    }

    fn get(&self, j: usize) -> f64 {
        if self.spill.is_empty() {
            self.inline[j]
        } else {
            self.spill[j]
        }
    }

    fn set(&mut self, i: usize, v: f64) {
        if self.spill.is_empty() && i >= INLINE {
            self.spill.extend_from_slice(&self.inline[..self.len]);
        }
        if self.spill.is_empty() {
            self.inline[i] = v;
        } else if i < self.spill.len() {
            self.spill[i] = v;
        } else {
            self.spill.push(v);
        }
    }

    fn as_slice(&self) -> &[f64] {
        if self.spill.is_empty() {
            &self.inline[..self.len]
        } else {
            &self.spill[..self.len]
        }
    }
}

/// Correctly rounded sum of `values`. Falls back to naive summation when a
/// non-finite value is present or an intermediate overflows.
pub fn fsum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut p = Partials::new();
    let mut special = 0.0;
    let mut any_special = false;
    let mut naive = 0.0;
    let mut overflow = false;

    for v in values {
        naive += v;
        if !v.is_finite() {
            special += v;
            any_special = true;
            continue;
        }
        if overflow {
            continue;
        }
        let mut x = v;
        let mut i = 0;
        for j in 0..p.len {
            let mut y = p.get(j);
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            if !hi.is_finite() {
                overflow = true;
                break;
            }
            let lo = y - (hi - x);
            if lo != 0.0 {
                p.set(i, lo);
                i += 1;
            }
            x = hi;
        }
        if overflow {
            continue;
        }
        p.set(i, x);
        p.len = i + 1;
    }
    let partials = p.as_slice();

    if any_special {
        return special;
    }
    if overflow {
        return naive;
    }

    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // Round-half-even correction when the remaining partials push past the tie.
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}
