# Routes package