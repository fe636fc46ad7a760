//! Roles, API keys and the permission matrix.
//!
//! | action        | Operator | Provider(own) | Provider(other) | Developer(subscribed) | Developer(other) | EndUser |
//! |---------------|----------|---------------|-----------------|-----------------------|------------------|---------|
//! | create_feed   | allow    | deny          | deny            | deny                  | deny             | deny    |
//! | create_stream | allow    | allow         | deny            | deny                  | deny             | deny    |
//! | ingest        | allow    | allow         | deny            | deny                  | deny             | deny    |
//! | read_data     | allow    | allow         | deny            | allow                 | deny             | deny    |
//! | read_latest   | allow    | allow         | deny            | allow                 | deny             | allow   |
//! | subscribe     | deny     | deny          | deny            | allow                 | allow            | deny    |
//! | issue/revoke  | allow    | deny          | deny            | deny                  | deny             | deny    |

use std::fmt;
use std::str::FromStr;

use rand::distributions::Alphanumeric;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::HubError;
use crate::model::{timestamp_serde, FeedId, KeyId, KeySecret, Timestamp};

pub const SECRET_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    PlatformOperator,
    DataProvider,
    AppDeveloper,
    EndUser,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::PlatformOperator, Role::DataProvider, Role::AppDeveloper, Role::EndUser];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::PlatformOperator => "PlatformOperator",
            Role::DataProvider => "DataProvider",
            Role::AppDeveloper => "AppDeveloper",
            Role::EndUser => "EndUser",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = HubError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| HubError::InvalidField(format!("unknown role {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyScope {
    AllFeeds,
    Feed(FeedId),
}

impl KeyScope {
    pub fn covers(&self, feed: &FeedId) -> bool {
        match self {
            KeyScope::AllFeeds => true,
            KeyScope::Feed(own) => own == feed,
        }
    }
}

/// Checks the role/scope pairing rules.
pub fn check_scope(role: Role, scope: &KeyScope) -> Result<(), HubError> {
    match (role, scope) {
        (Role::DataProvider, KeyScope::AllFeeds) => {
            Err(HubError::InvalidScope("DataProvider keys must be scoped to one feed".into()))
        }
        (Role::PlatformOperator, KeyScope::Feed(_)) => {
            Err(HubError::InvalidScope("PlatformOperator keys must cover all feeds".into()))
        }
        _ => Ok(()),
    }
}

/// A stored key record, secret included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiKey {
    pub id: KeyId,
    pub secret: KeySecret,
    pub role: Role,
    pub scope: KeyScope,
    pub label: String,
    pub revoked: bool,
    #[serde(with = "timestamp_serde")]
    pub created_at: Timestamp,
}

/// Public view of a key: everything but the secret.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyInfo {
    pub id: KeyId,
    pub role: Role,
    pub scope: KeyScope,
    pub label: String,
    pub revoked: bool,
    #[serde(with = "timestamp_serde")]
    pub created_at: Timestamp,
}

impl From<&ApiKey> for KeyInfo {
    fn from(k: &ApiKey) -> Self {
        KeyInfo {
            id: k.id.clone(),
            role: k.role,
            scope: k.scope.clone(),
            label: k.label.clone(),
            revoked: k.revoked,
            created_at: k.created_at,
        }
    }
}

/// Base62 secret from the thread-local CSPRNG.
pub fn generate_secret() -> KeySecret {
    KeySecret::new(random_base62(SECRET_LEN))
}

pub fn generate_key_id() -> KeyId {
    KeyId::new(format!("key_{}", random_base62(16))).expect("base62 is a valid key id")
}

fn random_base62(len: usize) -> String {
    rand::thread_rng().sample_iter(&Alphanumeric).take(len).map(char::from).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    CreateFeed,
    CreateStream,
    Ingest,
    ReadData,
    ReadLatest,
    Subscribe,
    IssueKey,
    RevokeKey,
}

impl Action {
    pub const ALL: [Action; 8] = [
        Action::CreateFeed,
        Action::CreateStream,
        Action::Ingest,
        Action::ReadData,
        Action::ReadLatest,
        Action::Subscribe,
        Action::IssueKey,
        Action::RevokeKey,
    ];

    fn feed_bound(self) -> bool {
        !matches!(self, Action::CreateFeed | Action::IssueKey | Action::RevokeKey)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub allow: bool,
    pub reason: String,
}

impl Decision {
    pub fn allow() -> Self {
        Decision { allow: true, reason: "allowed".into() }
    }

    pub fn deny(reason: &str) -> Self {
        Decision { allow: false, reason: reason.into() }
    }

    pub fn into_result(self) -> Result<(), HubError> {
        match (self.allow, self.reason.as_str()) {
            (true, _) => Ok(()),
            (false, "unauthorized") => Err(HubError::Unauthorized),
            (false, reason) => Err(HubError::Forbidden(reason.to_string())),
        }
    }
}

pub const DENY_UNAUTHORIZED: &str = "unauthorized";
pub const DENY_WRONG_ROLE: &str = "wrong-role";
pub const DENY_NOT_OWNER: &str = "not-owner";
pub const DENY_NOT_SUBSCRIBED: &str = "not-subscribed";
pub const DENY_OUT_OF_SCOPE: &str = "out-of-scope";
pub const DENY_MISSING_RESOURCE: &str = "missing-resource";

/// The matrix as a pure function. `key` is the record the secret resolved
/// to (if any); `subscribed` says whether that key holds a subscription on
/// `resource`.
pub fn decide(key: Option<&ApiKey>, subscribed: bool, action: Action, resource: Option<&FeedId>) -> Decision {
    let Some(key) = key.filter(|k| !k.revoked) else {
        return Decision::deny(DENY_UNAUTHORIZED);
    };
    let feed = match (action.feed_bound(), resource) {
        (true, None) => return Decision::deny(DENY_MISSING_RESOURCE),
        (true, Some(f)) => Some(f),
        (false, _) => None,
    };
    use Action::*;
    match key.role {
        Role::PlatformOperator => match action {
            Subscribe => Decision::deny(DENY_WRONG_ROLE),
            _ => Decision::allow(),
        },
        Role::DataProvider => match action {
            CreateStream | Ingest | ReadData | ReadLatest => {
                if feed.is_some_and(|f| key.scope.covers(f)) {
                    Decision::allow()
                } else {
                    Decision::deny(DENY_NOT_OWNER)
                }
            }
            _ => Decision::deny(DENY_WRONG_ROLE),
        },
        Role::AppDeveloper => match action {
            Subscribe | ReadData | ReadLatest if !feed.is_some_and(|f| key.scope.covers(f)) => {
                Decision::deny(DENY_OUT_OF_SCOPE)
            }
            Subscribe => Decision::allow(),
            ReadData | ReadLatest if subscribed => Decision::allow(),
            ReadData | ReadLatest => Decision::deny(DENY_NOT_SUBSCRIBED),
            _ => Decision::deny(DENY_WRONG_ROLE),
        },
        Role::EndUser => match action {
            ReadLatest if feed.is_some_and(|f| key.scope.covers(f)) => Decision::allow(),
            ReadLatest => Decision::deny(DENY_OUT_OF_SCOPE),
            _ => Decision::deny(DENY_WRONG_ROLE),
        },
    }
}
