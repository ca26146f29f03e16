use num_complex::Complex64 as C64;
use qahh::operators::Operator4;

/// `exp(-i H t)` by scaling, a 30-term Taylor series, and repeated squaring.
pub fn taylor_expm(h: &Operator4, t: f64) -> Operator4 {
    let a = h.scale_c(C64::new(0.0, -t));
    let norm = a.frobenius_norm();
    let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as u32 } else { 0 };
    let a = a.scale(0.5f64.powi(squarings as i32));
    let mut term = Operator4::identity();
    let mut sum = Operator4::identity();
    for k in 1..=30 {
        term = (term * a).scale(1.0 / k as f64);
        sum = sum + term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}
