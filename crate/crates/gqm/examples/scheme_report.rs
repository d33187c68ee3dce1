//! The README walkthrough: one QFI report for the interferometry scheme.

use gqm::{estimation, interferometer, metrology, DerivativeMethod};

fn main() -> gqm::Result<()> {
    let family = interferometer::scheme_family(1.0, 0.5)?; // nbar = 1, p = 0.5
    let report =
        metrology::qfi_matrix(&family, &[0.0, 0.7, 0.5], &DerivativeMethod::Analytic)?;

    let f = &report.f;             // 3x3 Fisher information
    let j = &report.j;             // SLD commutator averages (zero here)
    let r = estimation::ratio(f)?; // individual/simultaneous variance ratio
    let compat = estimation::compatibility_report(f, j, 1e-8, 1e-8)?;
    assert!(compat.commuting_slds); // one measurement fits all three
    println!("ratio {r:.6}");
    Ok(())
}
