//! Kernel constants of the sixth-power biweight kernel used throughout.

use filament::kernel::constants;

fn main() {
    let k = constants();
    println!("int K          = {:.12}", k.integral_of_k);
    println!("mu2            = {:.12}", k.mu2);
    println!("int (K^(3,0))^2 = {:.6}", k.int_k30_sq);
    println!("int (K^(1,2))^2 = {:.6}", k.int_k12_sq);
    println!("b1             = {:.6}", k.b1);
    println!("R =");
    for row in &k.r_matrix {
        println!("  {:>12.4} {:>12.4} {:>12.4}", row[0], row[1], row[2]);
    }
}
