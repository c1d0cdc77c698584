//! Symbol alphabets, Gray labels and the nearest-point slicer.

use serde::{Deserialize, Serialize};

use crate::scalar::{cx, Cx, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    #[default]
    Qpsk,
}

impl Constellation {
    pub fn size(self) -> usize {
        match self {
            Constellation::Qpsk => 4,
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Constellation::Qpsk => 2,
        }
    }

    /// Unit-average-power alphabet. QPSK order: quadrants I, II, III, IV,
    /// i.e. `(1+j, -1+j, -1-j, 1-j)/√2`.
    pub fn point<T: Real>(self, index: usize) -> Cx<T> {
        match self {
            Constellation::Qpsk => {
                let a = T::of(std::f64::consts::FRAC_1_SQRT_2);
                match index {
                    0 => cx(a, a),
                    1 => cx(-a, a),
                    2 => cx(-a, -a),
                    3 => cx(a, -a),
                    _ => panic!("QPSK index {index} out of range"),
                }
            }
        }
    }

    pub fn alphabet<T: Real>(self) -> Vec<Cx<T>> {
        (0..self.size()).map(|i| self.point(i)).collect()
    }

    /// Gray label of a symbol index. For QPSK bit 1 is the sign of the real
    /// part and bit 0 the sign of the imaginary part (set when negative), so
    /// neighbouring quadrants differ in exactly one bit.
    pub fn gray_label(self, index: usize) -> u32 {
        match self {
            Constellation::Qpsk => [0b00, 0b10, 0b11, 0b01][index],
        }
    }

    /// Index of the nearest point of `scale · alphabet`; ties go to the
    /// lowest index.
    pub fn slice_scaled<T: Real>(self, x: Cx<T>, scale: T) -> usize {
        let mut best = 0;
        let mut best_d = T::max_value().unwrap_or_else(T::one);
        for i in 0..self.size() {
            let p: Cx<T> = self.point(i);
            let d = (x - p.scale(scale)).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub fn slice<T: Real>(self, x: Cx<T>) -> usize {
        self.slice_scaled(x, T::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn qpsk_alphabet_unit_power() {
        let pts = Constellation::Qpsk.alphabet::<f64>();
        for p in &pts {
            assert!((p.norm_sqr() - 1.0).abs() < 1e-15);
        }
        assert!((pts[0] - cx(1.0, 1.0).unscale(2f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn slicer_nearest_point() {
        let s = 2f64.sqrt();
        let x = cx(0.9 / s, 1.1 / s);
        assert_eq!(Constellation::Qpsk.slice(x), 0);
        assert_eq!(Constellation::Qpsk.slice(cx(-0.2, -3.0)), 2);
        assert_eq!(Constellation::Qpsk.slice(cx(0.1, -0.01)), 3);
    }

    #[test]
    fn slicer_tie_breaks_low() {
        assert_eq!(Constellation::Qpsk.slice(cx(0.0f64, 0.0)), 0);
        assert_eq!(Constellation::Qpsk.slice(cx(0.0f64, -1.0)), 2);
    }

    #[test]
    fn gray_neighbours_differ_by_one_bit() {
        let c = Constellation::Qpsk;
        for i in 0..4 {
            let j = (i + 1) % 4;
            assert_eq!((c.gray_label(i) ^ c.gray_label(j)).count_ones(), 1);
        }
        assert_eq!((c.gray_label(0) ^ c.gray_label(2)).count_ones(), 2);
    }

    proptest! {
        #[test]
        fn slicer_idempotent(re in -5.0f64..5.0, im in -5.0f64..5.0, scale in 0.01f64..10.0) {
            let c = Constellation::Qpsk;
            let once = c.slice_scaled(cx(re, im), scale);
            let p: Cx<f64> = c.point(once);
            prop_assert_eq!(c.slice_scaled(p.scale(scale), scale), once);
            // common positive scaling of soft value and alphabet keeps the decision
            prop_assert_eq!(c.slice_scaled(cx(re, im).scale(3.0), 3.0 * scale), once);
        }
    }
}
