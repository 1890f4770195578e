//! Regenerates `tests/fixtures/fixture.csv`.

use uqkit::synth;

fn main() -> std::io::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "tests/fixtures/fixture.csv".into());
    std::fs::write(&path, synth::fixture(2000, 2024).canonical_csv())
}
