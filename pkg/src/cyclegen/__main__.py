from cyclegen.cli import main

raise SystemExit(main())
