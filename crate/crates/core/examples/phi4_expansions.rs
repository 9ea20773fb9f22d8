//! Tabulates the φ⁴ partition function against its weak and strong coupling expansions.
use bart_bmm::dataset::true_system_phi4;
use bart_bmm::eft::Expansion;

fn main() -> bart_bmm::Result<()> {
    let models = [
        ("weak2", Expansion::weak(2)),
        ("weak4", Expansion::weak(4)),
        ("strong4", Expansion::strong(4)),
    ];
    print!("{:>6} {:>10}", "x", "truth");
    for (name, _) in &models {
        print!(" {name:>10}");
    }
    println!();
    for i in 0..=12 {
        let x = 0.03 + i as f64 * (0.5 - 0.03) / 12.0;
        print!("{x:>6.3} {:>10.5}", true_system_phi4(x));
        for (_, e) in &models {
            print!(" {:>10.4}", e.evaluate(&[x])?);
        }
        println!();
    }
    Ok(())
}
