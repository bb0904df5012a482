//! Writes the bundled synthetic screen: `cargo run -p synergy-core --example make_demo_data -- <dir>`.

use synergy_core::synthetic::{generate, SyntheticConfig};

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data/demo".to_string());
    let screen = generate::<f64>(&SyntheticConfig::default()).expect("default config is valid");
    screen.write_dir(&dir).expect("output directory is writable");
    println!("wrote {} instances to {dir}", screen.instances.len());
}
