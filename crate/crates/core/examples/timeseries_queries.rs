//! Ingests a week of synthetic readings and runs range and windowed
//! aggregate queries over them.

use chrono::TimeDelta;
use cityhub::eeml::{DataElement, EnvironmentDocument};
use cityhub::egress::AggregateFn;
use cityhub::model::{parse_timestamp, FeedId, GeoPoint, StreamId, StreamRef};
use cityhub::registry::{Datastream, NewFeed};
use cityhub::{Hub, HubOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hub = Hub::in_memory(HubOptions::default());
    let op = hub.bootstrap_operator()?.ok_or("operator exists")?.secret;
    let feed = FeedId::new("sharjah-weather")?;
    hub.create_feed(&op, NewFeed { id: feed.clone(), title: "Sharjah weather".into(), location: GeoPoint::new(25.35, 55.42)?, tags: Default::default() })?;
    let stream = StreamId::new("temperature")?;
    hub.create_datastream(&op, &feed, Datastream::new(stream.clone(), "Celsius", "C"))?;

    let start = parse_timestamp("2016-07-14T00:00:00Z").ok_or("bad timestamp")?;
    for hour in 0..24 * 7 {
        let at = start + TimeDelta::hours(hour);
        let tenths = 300 + 10 * (12 - (hour % 24 - 14).abs()) + hour / 24;
        let doc = EnvironmentDocument {
            environment_id: None,
            updated: at,
            title: "reading".into(),
            location: None,
            data_elements: vec![DataElement {
                id: stream.clone(),
                tags: vec![],
                current_value: format!("{}.{}", tenths / 10, tenths % 10),
                at,
                unit_label: None,
                unit_symbol: None,
            }],
        };
        hub.ingest_document(&feed, &op, &doc, true)?;
    }

    let r = StreamRef::new(feed.clone(), stream.clone());
    let end = start + TimeDelta::days(7);
    let first_day = hub.read_datapoints(&r, start, start + TimeDelta::hours(5), usize::MAX, &op)?;
    println!("first six hours:");
    for p in &first_day {
        println!("  {}  {}", cityhub::model::format_timestamp(&p.at), p.value);
    }
    for f in [AggregateFn::Min, AggregateFn::Max, AggregateFn::Avg] {
        println!("daily {f}:");
        for b in hub.aggregate(&r, f, 86_400, start, end, &op)? {
            println!("  {}  {:.2}", cityhub::model::format_timestamp(&b.window_start), b.value);
        }
    }
    println!("latest: {:?}", hub.latest(&feed, &stream, &op)?);
    Ok(())
}
