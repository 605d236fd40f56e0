# Hand Primitives application package
