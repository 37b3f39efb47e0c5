use crate::nvector::{BinaryOp, UnaryOp, VResult, Vector, VectorError};

/// Ordered collection of subvectors acting as one vector. Streaming ops run
/// on each part in order; reductions fold the per-part results starting from
/// the first part.
#[derive(Debug)]
pub struct ManyVector<V> {
    parts: Vec<V>,
}

pub fn make_many<V: Vector>(parts: Vec<V>) -> ManyVector<V> {
    ManyVector::new(parts)
}

impl<V: Vector> ManyVector<V> {
    pub fn new(parts: Vec<V>) -> Self {
        assert!(!parts.is_empty(), "a many-vector needs at least one part");
        ManyVector { parts }
    }

    pub fn parts(&self) -> &[V] {
        &self.parts
    }

    pub fn parts_mut(&mut self) -> &mut [V] {
        &mut self.parts
    }

    pub fn part(&self, i: usize) -> &V {
        &self.parts[i]
    }

    pub fn part_mut(&mut self, i: usize) -> &mut V {
        &mut self.parts[i]
    }

    pub fn into_parts(self) -> Vec<V> {
        self.parts
    }

    fn check(&self, other: &Self) -> VResult<()> {
        if self.parts.len() != other.parts.len() {
            return Err(VectorError::LengthMismatch {
                expected: self.parts.len(),
                found: other.parts.len(),
            });
        }
        Ok(())
    }

    fn fold<F>(&self, op: fn(f64, f64) -> f64, mut f: F) -> VResult<f64>
    where
        F: FnMut(usize, &V) -> VResult<f64>,
    {
        let mut acc = f(0, &self.parts[0])?;
        for (i, p) in self.parts.iter().enumerate().skip(1) {
            acc = op(acc, f(i, p)?);
        }
        Ok(acc)
    }
}

fn add(a: f64, b: f64) -> f64 {
    a + b
}

impl<V: Vector> Vector for ManyVector<V> {
    fn len(&self) -> usize {
        self.parts.iter().map(Vector::len).sum()
    }

    fn duplicate(&self) -> Self {
        ManyVector {
            parts: self.parts.iter().map(Vector::duplicate).collect(),
        }
    }

    fn const_fill(&mut self, c: f64) -> VResult<()> {
        self.parts.iter_mut().try_for_each(|p| p.const_fill(c))
    }

    fn copy_from(&mut self, x: &Self) -> VResult<()> {
        self.check(x)?;
        for (z, x) in self.parts.iter_mut().zip(&x.parts) {
            z.copy_from(x)?;
        }
        Ok(())
    }

    fn linear_sum(&mut self, a: f64, x: &Self, b: f64, y: &Self) -> VResult<()> {
        self.check(x)?;
        self.check(y)?;
        for ((z, x), y) in self.parts.iter_mut().zip(&x.parts).zip(&y.parts) {
            z.linear_sum(a, x, b, y)?;
        }
        Ok(())
    }

    fn scale_add(&mut self, a: f64, b: f64, y: &Self) -> VResult<()> {
        self.check(y)?;
        for (z, y) in self.parts.iter_mut().zip(&y.parts) {
            z.scale_add(a, b, y)?;
        }
        Ok(())
    }

    fn unary(&mut self, op: UnaryOp, x: &Self) -> VResult<()> {
        self.check(x)?;
        for (z, x) in self.parts.iter_mut().zip(&x.parts) {
            z.unary(op, x)?;
        }
        Ok(())
    }

    fn binary(&mut self, op: BinaryOp, x: &Self, y: &Self) -> VResult<()> {
        self.check(x)?;
        self.check(y)?;
        for ((z, x), y) in self.parts.iter_mut().zip(&x.parts).zip(&y.parts) {
            z.binary(op, x, y)?;
        }
        Ok(())
    }

    fn dot(&self, y: &Self) -> VResult<f64> {
        self.check(y)?;
        self.fold(add, |i, p| p.dot(&y.parts[i]))
    }

    fn max_norm(&self) -> VResult<f64> {
        self.fold(f64::max, |_, p| p.max_norm())
    }

    fn min_val(&self) -> VResult<f64> {
        self.fold(f64::min, |_, p| p.min_val())
    }

    fn l1_norm(&self) -> VResult<f64> {
        self.fold(add, |_, p| p.l1_norm())
    }

    fn weighted_sq_sum(&self, w: &Self, mask: Option<&Self>) -> VResult<f64> {
        self.check(w)?;
        if let Some(m) = mask {
            self.check(m)?;
        }
        self.fold(add, |i, p| {
            p.weighted_sq_sum(&w.parts[i], mask.map(|m| &m.parts[i]))
        })
    }

    fn min_quotient(&self, den: &Self) -> VResult<f64> {
        self.check(den)?;
        self.fold(f64::min, |i, p| p.min_quotient(&den.parts[i]))
    }

    fn inv_test(&mut self, x: &Self) -> VResult<bool> {
        self.check(x)?;
        let mut ok = true;
        for (z, x) in self.parts.iter_mut().zip(&x.parts) {
            ok &= z.inv_test(x)?;
        }
        Ok(ok)
    }

    fn constr_mask(&mut self, c: &Self, x: &Self) -> VResult<bool> {
        self.check(c)?;
        self.check(x)?;
        let mut ok = true;
        for ((m, c), x) in self.parts.iter_mut().zip(&c.parts).zip(&x.parts) {
            ok &= m.constr_mask(c, x)?;
        }
        Ok(ok)
    }

    fn unary_in_place(&mut self, op: UnaryOp) -> VResult<()> {
        self.parts.iter_mut().try_for_each(|p| p.unary_in_place(op))
    }
}
