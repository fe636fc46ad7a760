//! Builds an EEML document, serializes it, parses it back, and shows how
//! the strict profile rejects a broken one.

use cityhub::eeml::{parse_eeml, serialize_eeml, DataElement, EnvironmentDocument};
use cityhub::model::{parse_timestamp, GeoPoint, StreamId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let at = parse_timestamp("2016-07-20T12:00:00Z").ok_or("bad timestamp")?;
    let doc = EnvironmentDocument {
        environment_id: Some("abu-dhabi-weather".into()),
        updated: at,
        title: "Abu Dhabi weather".into(),
        location: Some(GeoPoint::new(24.45, 54.38)?),
        data_elements: vec![
            DataElement {
                id: StreamId::new("temperature")?,
                tags: vec!["weather".into()],
                current_value: "41.5".into(),
                at,
                unit_label: Some("Celsius".into()),
                unit_symbol: Some("C".into()),
            },
            DataElement {
                id: StreamId::new("humidity")?,
                tags: vec![],
                current_value: "62".into(),
                at,
                unit_label: Some("Percent".into()),
                unit_symbol: Some("%".into()),
            },
        ],
    };

    let bytes = serialize_eeml(&doc)?;
    println!("{}", String::from_utf8_lossy(&bytes));
    let back = parse_eeml(&bytes)?;
    println!("round trip equal: {}", back == doc);

    let broken = String::from_utf8(bytes)?.replace(">41.5<", ">hot<");
    match parse_eeml(broken.as_bytes()) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected ({}): {e}", e.class()),
    }
    Ok(())
}
