//! Moving between complex and stacked real representations.

use nalgebra::{Complex, DMatrix};
use qml::wl::{to_sl_matrix, to_wl_vector, WlCovariance};

fn main() -> qml::Result<()> {
    let b = DMatrix::from_row_slice(2, 2, &[
        Complex::new(1.0, 2.0),
        Complex::new(0.0, -1.0),
        Complex::new(0.5, 0.0),
        Complex::new(-1.0, 1.0),
    ]);
    let a = [Complex::new(1.0, -1.0), Complex::new(2.0, 0.5)];

    let bw = to_sl_matrix(&b);
    let aw = to_wl_vector(&a);
    let product = bw.mul_vector(&aw)?;

    println!("stacked B =\n{}", bw.data());
    println!("B a via stacking = {:?}", product.to_complex());
    println!("B a directly     = {:?}", (&b * DMatrix::from_column_slice(2, 1, &a)).as_slice());
    println!("strictly linear: {}", bw.is_strictly_linear(1e-12));

    // An improper covariance: real and imaginary parts with different power.
    let r = WlCovariance::new(DMatrix::from_diagonal(&nalgebra::dvector![2.0, 2.0, 0.5, 0.5]))?;
    println!("proper before projection: {}", r.is_proper(1e-12));
    println!("proper after projection:  {}", r.project_proper().is_proper(1e-12));
    Ok(())
}
