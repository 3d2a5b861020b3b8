//! Typed indices for simulated objects.

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "{}{}", stringify!($name).trim_end_matches("Id").to_lowercase(), self.0)
            }
        }
    };
}

id_type!(PeId);
id_type!(DeviceId);
id_type!(NodeId);
id_type!(ChareId);
id_type!(ArrayId);
id_type!(
    /// Entry method identifier, chosen by the application.
    EntryId
);
id_type!(StreamId);
id_type!(
    /// Completion signal of a device op, graph, or channel operation.
    SignalId
);
id_type!(CallbackId);
id_type!(ChannelId);
id_type!(GraphId);
