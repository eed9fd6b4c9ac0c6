use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl From<u32> for $name {
            fn from(v: u32) -> Self {
                Self(v)
            }
        }
    };
}

id_type!(
    /// User equipment identifier.
    UeId
);
id_type!(
    /// Radio cell identifier.
    CellId
);
id_type!(
    /// Base station identifier.
    BsId
);
id_type!(
    /// Network slice identifier.
    SliceId
);
id_type!(
    /// Edge server identifier.
    ServerId
);
id_type!(
    /// AI service catalog identifier.
    ServiceId
);
id_type!(DeploymentId);
