//! Writes a dataset in both formats, reads it back and checks the records.

use dsloc::dataset::{dataset_file, load_dataset, save_dataset, Format, Role};
use dsloc::synth::{generate_synthetic_city, CityConfig};

fn main() -> dsloc::Result<()> {
    let city = generate_synthetic_city(&CityConfig { queries: 5, ..CityConfig::default() })?;
    let dir = std::env::temp_dir().join(format!("dsloc-dataset-io-{}", std::process::id()));
    for format in [Format::Jsonl, Format::Columnar] {
        save_dataset(&dir, &city.dataset, format)?;
        let back = load_dataset(&dir, format)?;
        let size = std::fs::metadata(dataset_file(&dir, Role::Reference, format))?.len();
        println!("{format:?}: references file {size} bytes, round trip identical: {}", back == city.dataset);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
