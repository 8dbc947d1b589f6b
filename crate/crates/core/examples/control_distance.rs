//! Quasi-distance `d`, control distance upper bound `d_c` and `ρ₂` around a point of the
//! Asian model, along eight frame directions.

use hypotube::control_metric::{equivalence_report, frame_directions, DcOptions};
use hypotube::model::asian;
use hypotube::Point2;

fn main() -> hypotube::Result<()> {
    let model = asian();
    let x = Point2::new(1.0, 1.0);
    let dirs = frame_directions(&model, x, 8)?;
    let radii = [1e-3, 1e-2, 1e-1];
    let rows = equivalence_report(&model, x, &dirs, &radii, &DcOptions::default())?;
    println!("dir  radius      d            d_c          rho2         d/d_c");
    for r in rows {
        println!(
            "{:>3}  {:<10.1e}  {:<11.5e}  {:<11.5e}  {:<11.5e}  {:.4}",
            r.direction,
            r.radius,
            r.d,
            r.d_c_upper,
            r.rho2,
            r.d_over_dc()
        );
    }
    Ok(())
}
