from pirrt.cli import main

raise SystemExit(main())
