//! Regenerates the committed demo fixtures: three synthetic participant
//! CSVs and a 20-item QA profiling corpus.
//!
//! Run from the workspace root:
//!
//! ```text
//! cargo run -p slmbench --example generate_demo_data
//! ```

use std::io::Write;

use slmbench::synth::{synthetic_logs, write_logs_as_csv};

const QA_ITEMS: [(&str, &str); 20] = [
    ("q01", "Which planet is known as the red planet?"),
    ("q02", "How many minutes are there in three hours?"),
    (
        "q03",
        "What gas do plants absorb from the air during photosynthesis?",
    ),
    ("q04", "Name the largest ocean on Earth."),
    (
        "q05",
        "What is the boiling point of water at sea level in Celsius?",
    ),
    ("q06", "How many sides does a hexagon have?"),
    ("q07", "Which element has the chemical symbol Fe?"),
    ("q08", "What is the capital city of Japan?"),
    ("q09", "How many chambers does a human heart have?"),
    ("q10", "Which instrument measures atmospheric pressure?"),
    ("q11", "What is the square root of one hundred forty-four?"),
    ("q12", "Which continent is the Sahara desert on?"),
    ("q13", "How many legs does a spider have?"),
    ("q14", "What do bees collect from flowers?"),
    (
        "q15",
        "Which language has the most native speakers worldwide?",
    ),
    ("q16", "How many bones are in the adult human body?"),
    ("q17", "What force keeps planets in orbit around the sun?"),
    ("q18", "Which organ filters blood in the human body?"),
    ("q19", "How many strings does a standard violin have?"),
    ("q20", "What is the freezing point of water in Fahrenheit?"),
];

fn main() -> std::io::Result<()> {
    let fixtures = std::path::Path::new("fixtures");

    let logs = synthetic_logs(3, 60, 20260101);
    let paths = write_logs_as_csv(&logs, &fixtures.join("pmdata-demo"))?;
    for path in &paths {
        println!("wrote {}", path.display());
    }

    let corpus_path = fixtures.join("profiling-corpus.jsonl");
    let mut corpus = std::fs::File::create(&corpus_path)?;
    for (id, prompt) in QA_ITEMS {
        writeln!(
            corpus,
            "{}",
            serde_json::json!({ "id": id, "prompt": prompt })
        )?;
    }
    println!("wrote {}", corpus_path.display());
    Ok(())
}
