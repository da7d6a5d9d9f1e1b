// Book chapters are bound as doctests; chapters land here as they are written.
