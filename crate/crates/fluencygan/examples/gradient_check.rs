//! The finite-difference verification suite: every differentiable op plus
//! the end-to-end composite losses, each checked against an independent
//! f64 oracle. Same machinery as `fluencygan gradcheck`.
//!
//! Run with: cargo run --release --example gradient_check

fn main() {
    let (reports, ok) = fluencygan::gradcheck::run_full_suite(42, 3);
    for report in &reports {
        println!("{}", report.line());
    }
    println!(
        "\n{} ({} checks)",
        if ok { "all gradients verified" } else { "GRADIENT CHECK FAILED" },
        reports.len()
    );
    std::process::exit(if ok { 0 } else { 1 });
}
