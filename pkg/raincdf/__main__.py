from raincdf.main import main

raise SystemExit(main())
