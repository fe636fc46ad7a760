//! Registers a few feeds and prints the Hypercat catalogue, whole and
//! filtered by tag.

use std::collections::BTreeSet;

use cityhub::hypercat::{serialize_catalogue, REL_HAS_TAG};
use cityhub::model::{FeedId, GeoPoint};
use cityhub::registry::NewFeed;
use cityhub::{Hub, HubOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hub = Hub::in_memory(HubOptions::default());
    let op = hub.bootstrap_operator()?.ok_or("operator exists")?.secret;
    for (id, title, lat, lon, tags) in [
        ("dubai-weather", "Dubai weather", 25.2, 55.27, vec!["weather", "uae"]),
        ("dubai-traffic", "Dubai traffic", 25.21, 55.28, vec!["traffic", "uae"]),
        ("london-air", "London air quality", 51.5072, -0.1276, vec!["air"]),
    ] {
        hub.create_feed(
            &op,
            NewFeed {
                id: FeedId::new(id)?,
                title: title.into(),
                location: GeoPoint::new(lat, lon)?,
                tags: tags.into_iter().map(String::from).collect::<BTreeSet<_>>(),
            },
        )?;
    }

    let all = hub.catalogue(None, None);
    println!("{}", String::from_utf8(serialize_catalogue(&all)?)?);

    let uae = hub.catalogue(Some(REL_HAS_TAG), Some("uae"));
    println!("\nitems tagged uae:");
    for item in &uae.items {
        println!("  {}", item.href);
    }
    Ok(())
}
