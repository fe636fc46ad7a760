//! Prints the permission matrix as the hub enforces it, then walks through
//! the auto-issued feed key and a developer subscription.

use cityhub::auth::{Action, KeyScope, Role};
use cityhub::model::{FeedId, GeoPoint};
use cityhub::registry::NewFeed;
use cityhub::{Hub, HubOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hub = Hub::in_memory(HubOptions::default());
    let op = hub.bootstrap_operator()?.ok_or("operator exists")?;
    let feed = |id: &str| NewFeed { id: FeedId::new(id).unwrap(), title: id.into(), location: GeoPoint::new(0.0, 0.0).unwrap(), tags: Default::default() };
    let own = hub.create_feed(&op.secret, feed("own-feed"))?;
    hub.create_feed(&op.secret, feed("other-feed"))?;
    let dev = hub.issue_key(&op.secret, Role::AppDeveloper, KeyScope::AllFeeds, "app")?;
    let user = hub.issue_key(&op.secret, Role::EndUser, KeyScope::AllFeeds, "citizen")?;
    let own_id = FeedId::new("own-feed")?;
    let other_id = FeedId::new("other-feed")?;
    hub.subscribe(&dev.secret, &own_id)?;

    let columns = [
        ("operator", &op.secret, &own_id),
        ("provider/own", &own.key.secret, &own_id),
        ("provider/other", &own.key.secret, &other_id),
        ("dev/subscribed", &dev.secret, &own_id),
        ("dev/other", &dev.secret, &other_id),
        ("end-user", &user.secret, &own_id),
    ];
    print!("{:<14}", "action");
    for (name, _, _) in &columns {
        print!("{name:>16}");
    }
    println!();
    for action in Action::ALL {
        print!("{:<14}", serde_json::to_value(action)?.as_str().unwrap_or_default());
        for (_, secret, target) in &columns {
            let d = hub.authorize(secret, action, Some(target));
            print!("{:>16}", if d.allow { "allow".to_string() } else { d.reason });
        }
        println!();
    }

    println!("\nauto-issued key for own-feed: role {:?}, scope {:?}", own.key.role, own.key.scope);
    hub.revoke_key(&op.secret, &dev.id)?;
    println!("after revocation the developer gets: {:?}", hub.authorize(&dev.secret, Action::ReadData, Some(&own_id)).reason);
    Ok(())
}
