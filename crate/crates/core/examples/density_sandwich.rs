//! Kernel density of the rescaled increment F = Ā_δ⁻¹(X_δ − x̂) and its Gaussian sandwich.

use hypotube::mc::density::density_fit;
use hypotube::mc::{rescaled_samples, SimConfig};
use hypotube::model::asian;
use hypotube::Point2;

fn main() -> hypotube::Result<()> {
    let m = asian();
    let x = Point2::new(1.0, 1.0);
    for delta in [0.01, 0.005] {
        let s = rescaled_samples(&m, x, &SimConfig::new(delta / 50.0, 200_000, 9, delta))?;
        let fit = density_fit(&s.f, 3.0, 41)?;
        println!(
            "delta {delta}: K1 {:.4} L1 {:.4}  K2 {:.4} L2 {:.4}  bandwidth ({:.3}, {:.3})  envelope holds on |z|<=2: {}",
            fit.k1, fit.l1, fit.k2, fit.l2, fit.bandwidth.0, fit.bandwidth.1, fit.envelope_holds(2.0)
        );
        for b in &fit.sensitivity {
            println!("  bandwidth x{}: L1 {:.4} L2 {:.4}", b.factor, b.l1, b.l2);
        }
    }
    Ok(())
}
