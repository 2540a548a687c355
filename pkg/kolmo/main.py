"""Punto de entrada principal del laboratorio."""

from kolmo.app.main import main


if __name__ == "__main__":
    raise SystemExit(main())
