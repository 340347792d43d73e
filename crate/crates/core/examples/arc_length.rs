//! Arc-length parametrization of the bent sticker.
//!
//! Prints where evenly spaced sticker columns land along the parabola for a
//! few bend rates, and checks that the curve length stays 2.

use advsticker::{arclen, arclen_inverse};

fn main() {
    for a in [0.0, 0.2, 0.4, 0.8] {
        let cols: Vec<String> = (0..=4)
            .map(|i| {
                let s = -1.0 + 0.5 * i as f64;
                format!("{:+.4}", arclen_inverse(a, s))
            })
            .collect();
        let u_max = arclen_inverse(a, 1.0);
        println!(
            "a = {a:.1}: columns at u = [{}], half-span {u_max:.4}, length {:.12}",
            cols.join(", "),
            arclen(a, u_max) - arclen(a, -u_max)
        );
    }
}
