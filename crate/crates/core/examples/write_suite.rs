//! Regenerates `data/phantom_suite.json`.

fn main() {
    let suite = reportsup::phantom::random_suite(reportsup::phantom::SUITE_SEED, 50);
    let mut json = serde_json::to_string_pretty(&suite).unwrap();
    json.push('\n');
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/phantom_suite.json");
    std::fs::write(path, json).unwrap();
    println!("wrote {} phantoms to {path}", suite.len());
}
