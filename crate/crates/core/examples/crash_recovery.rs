//! Writes through a disk-backed hub, "crashes" by copying the log mid-run,
//! and shows the replayed hub answering identically.

use cityhub::fixtures::{weather_streams, EMIRATES};
use cityhub::log::LOG_FILE_NAME;
use cityhub::model::{StreamId, StreamRef, Timestamp};
use cityhub::{Hub, HubOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = tempfile::tempdir()?;
    let live = root.path().join("live");
    let (hub, bootstrap) = Hub::open(&live, HubOptions::default())?;
    let op = bootstrap.ok_or("first start prints a bootstrap key")?.secret;

    let e = EMIRATES[5];
    let created = hub.create_feed(&op, e.new_feed())?;
    for s in weather_streams() {
        hub.create_datastream(&created.key.secret, &e.feed_id(), s)?;
    }
    let conversion = cityhub::adapter::convert_csv(&e.mapping(), e.day_csv().as_bytes())?;
    for doc in &conversion.documents[..12] {
        hub.ingest_document(&e.feed_id(), &created.key.secret, doc, true)?;
    }
    println!("log holds {} records", hub.log_lines()?.len());

    let crashed = root.path().join("crashed");
    std::fs::create_dir_all(&crashed)?;
    std::fs::copy(live.join(LOG_FILE_NAME), crashed.join(LOG_FILE_NAME))?;
    let (restored, again) = Hub::open(&crashed, HubOptions::default())?;
    println!("bootstrap key on restart: {}", again.is_some());

    let stream = StreamRef::new(e.feed_id(), StreamId::new("humidity")?);
    let read = |h: &Hub| h.read_datapoints(&stream, Timestamp::MIN_UTC, Timestamp::MAX_UTC, usize::MAX, &op);
    let (before, after) = (read(&hub)?, read(&restored)?);
    println!("humidity points before {} / after {}; identical: {}", before.len(), after.len(), before == after);
    println!("snapshots identical: {}", hub.snapshot(&e.feed_id(), &op)? == restored.snapshot(&e.feed_id(), &op)?);
    Ok(())
}
