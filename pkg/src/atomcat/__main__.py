from atomcat.cli import main

raise SystemExit(main())
