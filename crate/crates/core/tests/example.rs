use su2drift::three_qubit::average_fidelity;
use su2drift::DiffusionChannel;

#[test]
fn crate_level_example() {
    let ch = DiffusionChannel::new(2, 0.5).unwrap();
    let out = ch.apply_operator(&nalgebra::DMatrix::identity(4, 4)).unwrap();
    assert!((out.trace().re - 4.0).abs() < 1e-12);
    assert!((average_fidelity(0.0_f64) - 1.0).abs() < 1e-15);
}
