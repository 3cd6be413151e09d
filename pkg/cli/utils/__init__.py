# CLI utilities